#pragma once

// Synthetic singers for smoke runs: harmonic tones shaped by a per-singer
// formant envelope, sung as short note sequences around a chosen register.

#include "svclab/dsp/audio.hpp"
#include "svclab/io.hpp"
#include "svclab/types.hpp"

#include <string>
#include <vector>

namespace svclab::synth {

struct SyntheticSinger {
  std::string id;
  Gender gender = Gender::unknown;
  std::vector<double> formants_hz;  // resonance centres
  double formant_width_oct = 0.25;
  double tilt_db_per_oct = -6.0;
  double breath = 0.01;              // noise level relative to the harmonic peak
  std::vector<double> clip_medians;  // one clip per entry, semitones (69 = A440)
};

struct SynthOptions {
  double seconds = 4.2;
  double note_seconds = 0.35;
  double spread_st = 1.5;   // notes wander this far from the clip median
  double vibrato_st = 0.25;
  double lead_silence = 0.5;
  double peak = 0.5;
  int sample_rate = static_cast<int>(kSampleRate);
};

/// One clip of `singer` centred on `median_st`; deterministic in `seed`.
dsp::Waveform render_clip(const SyntheticSinger& singer, double median_st, std::uint64_t seed,
                          const SynthOptions& opt = {});

/// Alternating male/female singers with distinct envelopes. Male clips sit in
/// [50, 60] semitones and female clips in [57, 67], so registers overlap.
std::vector<SyntheticSinger> toy_roster(int n_singers, int clips_per_singer, std::uint64_t seed);

/// Writes <dir>/<singer>/<singer>_cK.wav plus <dir>/singers.csv.
void write_corpus(const fs::path& dir, const std::vector<SyntheticSinger>& roster, std::uint64_t seed,
                  const SynthOptions& opt = {});

}  // namespace svclab::synth
