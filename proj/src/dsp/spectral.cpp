#include "svclab/dsp/spectral.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace svclab::dsp {

void MelConfig::validate() const {
  if (fft_size <= 0 || hop_size <= 0 || hop_size >= fft_size)
    throw Error(Errc::config, "mel config requires 0 < hop_size < fft_size");
  if (n_mels <= 0) throw Error(Errc::config, "mel config requires n_mels > 0");
  if (sample_rate <= 0) throw Error(Errc::config, "mel config requires a positive sample rate");
  if (!(fmax > fmin)) throw Error(Errc::config, "mel config requires fmax > fmin");
}

VectorXf hann_window(Index n) {
  VectorXf w(n);
  for (Index i = 0; i < n; ++i)
    w(i) = static_cast<float>(0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n));
  return w;
}

Index frame_count(Index n_samples, Index fft_size, Index hop_size) {
  if (n_samples < fft_size) return 0;
  return 1 + (n_samples - fft_size) / hop_size;
}

ComplexMatrix stft(const VectorXf& x, Index fft_size, Index hop_size) {
  const Index frames = frame_count(x.size(), fft_size, hop_size);
  const Index bins = fft_size / 2 + 1;
  const VectorXf window = hann_window(fft_size);
  Eigen::FFT<float> fft;
  fft.SetFlag(Eigen::FFT<float>::HalfSpectrum);
  std::vector<float> frame(static_cast<std::size_t>(fft_size));
  std::vector<std::complex<float>> spec;
  ComplexMatrix out(frames, bins);
  for (Index t = 0; t < frames; ++t) {
    for (Index i = 0; i < fft_size; ++i)
      frame[static_cast<std::size_t>(i)] = x(t * hop_size + i) * window(i);
    fft.fwd(spec, frame);
    for (Index k = 0; k < bins; ++k) out(t, k) = spec[static_cast<std::size_t>(k)];
  }
  return out;
}

VectorXf istft(const ComplexMatrix& spec, Index fft_size, Index hop_size) {
  const Index frames = spec.rows();
  const Index len = frames == 0 ? 0 : (frames - 1) * hop_size + fft_size;
  const VectorXf window = hann_window(fft_size);
  Eigen::FFT<float> fft;
  fft.SetFlag(Eigen::FFT<float>::HalfSpectrum);
  VectorXf y = VectorXf::Zero(len);
  VectorXf wsum = VectorXf::Zero(len);
  std::vector<std::complex<float>> half(static_cast<std::size_t>(spec.cols()));
  std::vector<float> frame;
  for (Index t = 0; t < frames; ++t) {
    for (Index k = 0; k < spec.cols(); ++k) half[static_cast<std::size_t>(k)] = spec(t, k);
    fft.inv(frame, half, fft_size);
    for (Index i = 0; i < fft_size; ++i) {
      y(t * hop_size + i) += frame[static_cast<std::size_t>(i)] * window(i);
      wsum(t * hop_size + i) += window(i) * window(i);
    }
  }
  for (Index i = 0; i < len; ++i)
    if (wsum(i) > 1e-8f) y(i) /= wsum(i);
  return y;
}

namespace {
constexpr double kFSp = 200.0 / 3.0;
constexpr double kMinLogHz = 1000.0;
constexpr double kMinLogMel = kMinLogHz / kFSp;
const double kLogStep = std::log(6.4) / 27.0;
}  // namespace

double hz_to_mel(double hz) {
  if (hz < kMinLogHz) return hz / kFSp;
  return kMinLogMel + std::log(hz / kMinLogHz) / kLogStep;
}

double mel_to_hz(double mel) {
  if (mel < kMinLogMel) return mel * kFSp;
  return kMinLogHz * std::exp(kLogStep * (mel - kMinLogMel));
}

namespace {

Eigen::VectorXd mel_points(const MelConfig& cfg) {
  const double lo = hz_to_mel(cfg.fmin);
  const double hi = hz_to_mel(cfg.fmax);
  Eigen::VectorXd hz(cfg.n_mels + 2);
  for (Index i = 0; i < cfg.n_mels + 2; ++i)
    hz(i) = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1));
  return hz;
}

}  // namespace

Eigen::VectorXd mel_center_frequencies(const MelConfig& cfg) {
  return mel_points(cfg).segment(1, cfg.n_mels);
}

MatrixXf mel_filterbank(const MelConfig& cfg) {
  cfg.validate();
  const Index bins = cfg.fft_size / 2 + 1;
  const Eigen::VectorXd hz = mel_points(cfg);
  MatrixXf fb = MatrixXf::Zero(cfg.n_mels, bins);
  for (Index m = 0; m < cfg.n_mels; ++m) {
    const double lower = hz(m), center = hz(m + 1), upper = hz(m + 2);
    const double enorm = 2.0 / (upper - lower);
    for (Index k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / static_cast<double>(cfg.fft_size);
      const double rise = (f - lower) / (center - lower);
      const double fall = (upper - f) / (upper - center);
      const double v = std::max(0.0, std::min(rise, fall));
      fb(m, k) = static_cast<float>(v * enorm);
    }
  }
  return fb;
}

MatrixXf mel_spectrogram(const Waveform& w, const MelConfig& cfg) {
  cfg.validate();
  if (w.size() < cfg.fft_size)
    throw Error(Errc::too_short, "waveform of " + std::to_string(w.size()) +
                                     " samples is shorter than one FFT frame");
  const ComplexMatrix spec = stft(w.samples, cfg.fft_size, cfg.hop_size);
  const MatrixXf mag = spec.cwiseAbs();
  const MatrixXf fb = mel_filterbank(cfg);
  MatrixXf mel = mag * fb.transpose();
  const float floor_lin = std::exp(cfg.log_floor);
  return mel.unaryExpr([&](float v) { return std::log(std::max(v, floor_lin)); });
}

MelNormalization fit_normalization(const MatrixXf& log_mel) {
  return {log_mel.minCoeff(), log_mel.maxCoeff()};
}

MatrixXf normalize(const MatrixXf& log_mel, const MelNormalization& n) {
  const float span = n.max - n.min;
  if (!(span > 0.0f)) return MatrixXf::Zero(log_mel.rows(), log_mel.cols());
  return ((log_mel.array() - n.min) / span).cwiseMax(0.0f).cwiseMin(1.0f).matrix();
}

MatrixXf denormalize(const MatrixXf& normalized, const MelNormalization& n) {
  return (normalized.array() * (n.max - n.min) + n.min).matrix();
}

Waveform griffin_lim_log(const MatrixXf& log_mel, const MelConfig& cfg, const GriffinLimOptions& opt) {
  cfg.validate();
  if (log_mel.cols() != cfg.n_mels)
    throw Error(Errc::shape, "mel matrix has " + std::to_string(log_mel.cols()) + " bins, expected " +
                                 std::to_string(cfg.n_mels));
  const Index frames = log_mel.rows();
  const Index bins = cfg.fft_size / 2 + 1;
  const Eigen::MatrixXd fb = mel_filterbank(cfg).cast<double>();
  const Eigen::MatrixXd pinv = fb.completeOrthogonalDecomposition().pseudoInverse();
  const Eigen::MatrixXd mel_lin = log_mel.cast<double>().array().exp().matrix();
  const MatrixXf target = (mel_lin * pinv.transpose()).cwiseMax(0.0).cast<float>();

  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<float> phase(0.0f, 2.0f * std::numbers::pi_v<float>);
  ComplexMatrix angles(frames, bins);
  for (Index t = 0; t < frames; ++t)
    for (Index k = 0; k < bins; ++k) angles(t, k) = std::polar(1.0f, phase(rng));

  ComplexMatrix rebuilt = ComplexMatrix::Zero(frames, bins);
  VectorXf signal;
  const float blend = opt.momentum / (1.0f + opt.momentum);
  for (int it = 0; it < opt.iters; ++it) {
    signal = istft(target.cast<std::complex<float>>().cwiseProduct(angles), cfg.fft_size, cfg.hop_size);
    const ComplexMatrix previous = rebuilt;
    rebuilt = stft(signal, cfg.fft_size, cfg.hop_size);
    angles = rebuilt - blend * previous;
    for (Index t = 0; t < frames; ++t)
      for (Index k = 0; k < bins; ++k) {
        const float mag = std::abs(angles(t, k));
        angles(t, k) = mag > 1e-16f ? angles(t, k) / mag : std::complex<float>(1.0f, 0.0f);
      }
  }
  signal = istft(target.cast<std::complex<float>>().cwiseProduct(angles), cfg.fft_size, cfg.hop_size);
  Waveform out;
  out.sample_rate = cfg.sample_rate;
  out.samples = signal;
  return out;
}

Waveform griffin_lim(const MatrixXf& normalized_mel, const std::optional<MelNormalization>& norm,
                     const MelConfig& cfg, const GriffinLimOptions& opt) {
  if (!norm)
    throw Error(Errc::data, "griffin_lim needs the clip's normalization metadata to de-normalize");
  return griffin_lim_log(denormalize(normalized_mel, *norm), cfg, opt);
}

double mel_round_trip_error(const MatrixXf& log_mel, const Waveform& w, const MelConfig& cfg) {
  const MatrixXf again = mel_spectrogram(w, cfg);
  const Index frames = std::min(again.rows(), log_mel.rows());
  return (again.topRows(frames) - log_mel.topRows(frames)).cwiseAbs().mean();
}

}  // namespace svclab::dsp
