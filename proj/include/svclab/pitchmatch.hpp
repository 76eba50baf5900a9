#pragma once

// Pitch-register matching between singers: a YIN-style F0 tracker, semitone
// range summaries, and the target search used to pair conversion examples.

#include "svclab/dsp/audio.hpp"
#include "svclab/io.hpp"

#include <map>
#include <string>
#include <vector>

namespace svclab::pitch {

struct YinOptions {
  Index frame_size = 1024;  // same framing as the mel features
  Index hop_size = 256;
  double fmin = 50.0;
  double fmax = 1100.0;
  double threshold = 0.1;
  double min_level_db = -50.0;  // quieter frames are unvoiced
};

/// Per-frame F0 in Hz, 0 where unvoiced.
struct F0Contour {
  VectorXf f0_hz;
  double frame_hop = 0.016;

  Index frames() const { return f0_hz.size(); }
  double voiced_fraction() const;
};

F0Contour extract_f0(const dsp::Waveform& w, const YinOptions& opt = {});

/// 69 + 12 log2(f / 440).
double hz_to_semitones(double hz);

/// Linear-interpolated percentile (q in [0, 100]) of an unsorted sample.
double percentile(std::vector<double> values, double q);

struct PitchRange {
  double median_st = 0;
  double p10_st = 0;
  double p90_st = 0;
  double voiced_fraction = 0;
};

/// Semitone statistics over voiced frames; Errc::no_voicing when there are none.
PitchRange pitch_range(const F0Contour& c);

struct ClipRange {
  std::string clip_id;
  PitchRange range;
};

/// singer_id -> one range per clip.
using Catalog = std::map<std::string, std::vector<ClipRange>>;

struct MatchOptions {
  double tol_st = 2.0;
  bool require_overlap = false;  // also demand intersecting [p10, p90] intervals
};

struct Match {
  std::string singer_id;
  std::string clip_id;
  double delta_st = 0;  // |median(clip) - median(source)|
};

/// Singers with a clip whose median lies strictly within tol of the source median,
/// each represented by its closest clip, ordered by distance then singer id.
/// `exclude_singer` (normally the source singer) is never returned. No
/// octave shifting is applied.
std::vector<Match> match_targets(const PitchRange& source, const Catalog& catalog, const MatchOptions& opt = {},
                                 const std::string& exclude_singer = {});

// Catalog file: header row, then singer_id,clip_id,median_st,p10_st,p90_st,voiced_fraction.
void write_catalog(const fs::path& path, const Catalog& catalog);
Catalog read_catalog(const fs::path& path);

/// Finds a clip's range by id; Errc::not_found when absent.
std::pair<std::string, PitchRange> find_clip(const Catalog& catalog, const std::string& clip_id);

}  // namespace svclab::pitch
