#pragma once

#include "svclab/dsp/audio.hpp"

#include <complex>
#include <cstdint>
#include <optional>

namespace svclab::dsp {

struct MelConfig {
  int sample_rate = static_cast<int>(kSampleRate);
  Index fft_size = 1024;
  Index hop_size = 256;
  Index n_mels = kMelBins;
  float log_floor = -11.512925f;  // ln(1e-5)
  double fmin = 0.0;
  double fmax = 8000.0;

  void validate() const;
  double frame_seconds() const { return static_cast<double>(hop_size) / sample_rate; }
};

using ComplexMatrix = Eigen::Matrix<std::complex<float>, Eigen::Dynamic, Eigen::Dynamic>;

/// Periodic Hann window of length n.
VectorXf hann_window(Index n);

/// Frames start at sample 0 with no center padding: T = 1 + (n - fft) / hop.
Index frame_count(Index n_samples, Index fft_size, Index hop_size);

/// One-sided STFT, frames x (fft/2 + 1).
ComplexMatrix stft(const VectorXf& x, Index fft_size, Index hop_size);

/// Weighted overlap-add inverse of `stft` with squared-window normalization.
VectorXf istft(const ComplexMatrix& spec, Index fft_size, Index hop_size);

double hz_to_mel(double hz);  // Slaney scale
double mel_to_hz(double mel);

/// Slaney-normalized triangular filterbank, n_mels x (fft/2 + 1).
MatrixXf mel_filterbank(const MelConfig& cfg);

/// Center frequency (Hz) of each mel band.
Eigen::VectorXd mel_center_frequencies(const MelConfig& cfg);

/// Natural-log mel magnitudes clamped at cfg.log_floor, frames x n_mels.
MatrixXf mel_spectrogram(const Waveform& w, const MelConfig& cfg);

/// Min-max scaling parameters stored alongside each clip.
struct MelNormalization {
  float min = 0.0f;
  float max = 1.0f;
};

MelNormalization fit_normalization(const MatrixXf& log_mel);
MatrixXf normalize(const MatrixXf& log_mel, const MelNormalization& n);
MatrixXf denormalize(const MatrixXf& normalized, const MelNormalization& n);

struct GriffinLimOptions {
  int iters = 60;
  float momentum = 0.99f;
  std::uint64_t seed = 0;
};

/// Renders a log-mel matrix (frames x n_mels) to audio. Linear magnitudes are
/// recovered with the filterbank pseudo-inverse.
Waveform griffin_lim_log(const MatrixXf& log_mel, const MelConfig& cfg, const GriffinLimOptions& opt = {});

/// Same as griffin_lim_log for a min-max normalized mel; the normalization is required.
Waveform griffin_lim(const MatrixXf& normalized_mel, const std::optional<MelNormalization>& norm,
                     const MelConfig& cfg, const GriffinLimOptions& opt = {});

/// Mean absolute difference between `log_mel` and the mel re-extracted from `w`
/// over the overlapping frames.
double mel_round_trip_error(const MatrixXf& log_mel, const Waveform& w, const MelConfig& cfg);

}  // namespace svclab::dsp
