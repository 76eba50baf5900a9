#pragma once

#include "svclab/common.hpp"

#include <filesystem>

namespace svclab::dsp {

struct Waveform {
  VectorXf samples;
  int sample_rate = static_cast<int>(kSampleRate);

  Index size() const { return samples.size(); }
  double seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
};

struct WavData {
  Eigen::MatrixXf channels;  // frames x channels
  int sample_rate = 0;
};

/// Reads RIFF/WAVE files holding integer PCM (8/16/24/32 bit) or IEEE float.
WavData read_wav(const std::filesystem::path& path);

/// Writes 16-bit PCM mono; samples are clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, const Waveform& w);

/// Band-limited resampling with a Hann-windowed sinc kernel. Output length is
/// round(n * to / from).
VectorXf resample(const VectorXf& x, int from_rate, int to_rate);

double rms(const Eigen::Ref<const VectorXf>& x);
double to_dbfs(double amplitude);

}  // namespace svclab::dsp
