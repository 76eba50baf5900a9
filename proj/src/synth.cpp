#include "svclab/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace svclab::synth {

namespace {

double envelope_db(const SyntheticSinger& s, double hz) {
  const double oct = std::log2(hz / 100.0);
  double db = s.tilt_db_per_oct * oct;
  double peak = 0;
  for (double f : s.formants_hz) {
    const double d = std::log2(hz / f) / s.formant_width_oct;
    peak = std::max(peak, 30.0 * std::exp(-0.5 * d * d));
  }
  return db + peak;
}

}  // namespace

dsp::Waveform render_clip(const SyntheticSinger& singer, double median_st, std::uint64_t seed,
                          const SynthOptions& opt) {
  std::mt19937_64 rng(seed);
  const int sr = opt.sample_rate;
  const Index lead = static_cast<Index>(opt.lead_silence * sr);
  const Index n = lead + static_cast<Index>(opt.seconds * sr);
  const Index note_len = std::max<Index>(1, static_cast<Index>(opt.note_seconds * sr));

  // Piecewise-constant note targets with a short glide between them.
  std::uniform_real_distribution<double> offset(-opt.spread_st, opt.spread_st);
  std::vector<double> notes;
  for (Index i = 0; i * note_len < n - lead; ++i) notes.push_back(median_st + std::round(offset(rng) * 2) / 2);
  const double vib_rate = 5.0 + 1.5 * std::uniform_real_distribution<double>(0, 1)(rng);

  const double nyq = 0.5 * sr - 300.0;
  const int max_h = static_cast<int>(nyq / 60.0);
  std::vector<double> phase(static_cast<std::size_t>(max_h), 0.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  VectorXf x = VectorXf::Zero(n);
  std::vector<double> amp(static_cast<std::size_t>(max_h), 0.0);
  for (Index i = lead; i < n; ++i) {
    const Index k = (i - lead) / note_len;
    const double t = static_cast<double>(i - lead) / sr;
    double st = notes[static_cast<std::size_t>(k)];
    const Index into = (i - lead) % note_len;
    const Index glide = note_len / 8;
    if (k > 0 && into < glide) {
      const double a = static_cast<double>(into) / glide;
      st = (1 - a) * notes[static_cast<std::size_t>(k - 1)] + a * st;
    }
    st += opt.vibrato_st * std::sin(2 * std::numbers::pi * vib_rate * t);
    const double f0 = 440.0 * std::pow(2.0, (st - 69.0) / 12.0);
    // The envelope moves slowly, so harmonic gains are refreshed every 32 samples.
    const bool refresh = (i - lead) % 32 == 0;
    double acc = 0;
    for (int h = 1; h <= max_h; ++h) {
      auto& ph = phase[static_cast<std::size_t>(h - 1)];
      auto& a = amp[static_cast<std::size_t>(h - 1)];
      if (refresh) a = h * f0 < nyq ? std::pow(10.0, envelope_db(singer, h * f0) / 20.0) : 0.0;
      if (a == 0.0) continue;
      ph += 2 * std::numbers::pi * h * f0 / sr;
      if (ph > 2 * std::numbers::pi) ph -= 2 * std::numbers::pi;
      acc += a * std::sin(ph);
    }
    x(i) = static_cast<float>(acc);
  }
  const float peak = x.cwiseAbs().maxCoeff();
  if (peak > 0) x *= static_cast<float>(opt.peak) / peak;
  for (Index i = lead; i < n; ++i) x(i) += static_cast<float>(singer.breath * opt.peak * noise(rng));
  // Short fades avoid clicks at the onset.
  const Index fade = std::min<Index>(sr / 100, n - lead);
  for (Index i = 0; i < fade; ++i) x(lead + i) *= static_cast<float>(i) / fade;
  return {x, sr};
}

std::vector<SyntheticSinger> toy_roster(int n_singers, int clips_per_singer, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<SyntheticSinger> out;
  for (int i = 0; i < n_singers; ++i) {
    SyntheticSinger s;
    const bool male = i % 2 == 0;
    s.gender = male ? Gender::male : Gender::female;
    s.id = std::string(male ? "m" : "f") + std::to_string(i / 2 + 1);
    // Spread the first formant evenly across singers so envelopes stay distinct.
    const double a = (i + 0.5) / n_singers;
    s.formants_hz = {300.0 + 600.0 * a, 2400.0 - 1300.0 * a + 200.0 * u(rng), 2700.0 + 900.0 * u(rng)};
    s.tilt_db_per_oct = -3.0 - 9.0 * u(rng);
    s.breath = 0.005 + 0.02 * u(rng);
    const double lo = male ? 50.0 : 57.0;
    for (int c = 0; c < clips_per_singer; ++c) {
      const double frac = clips_per_singer > 1 ? static_cast<double>(c) / (clips_per_singer - 1) : 0.5;
      s.clip_medians.push_back(std::round((lo + 10.0 * frac + 0.6 * (u(rng) - 0.5)) * 10) / 10);
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_corpus(const fs::path& dir, const std::vector<SyntheticSinger>& roster, std::uint64_t seed,
                  const SynthOptions& opt) {
  fs::create_directories(dir);
  std::string meta = "singer_id,gender\n";
  std::uint64_t clip_seed = seed;
  for (const auto& s : roster) {
    fs::create_directories(dir / s.id);
    meta += s.id + "," + std::string(to_string(s.gender)) + "\n";
    for (std::size_t c = 0; c < s.clip_medians.size(); ++c) {
      const auto w = render_clip(s, s.clip_medians[c], ++clip_seed * 0x9e3779b97f4a7c15ULL, opt);
      dsp::write_wav(dir / s.id / (s.id + "_c" + std::to_string(c + 1) + ".wav"), w);
    }
  }
  write_text_file(dir / "singers.csv", meta);
}

}  // namespace svclab::synth
