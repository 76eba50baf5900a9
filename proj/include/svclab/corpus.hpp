#pragma once

// Ingestion: audio loading, silence trimming, log-mel features, windowing and
// singer-disjoint dataset splits.

#include "svclab/dsp/spectral.hpp"
#include "svclab/io.hpp"
#include "svclab/types.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace svclab::corpus {

using dsp::MelConfig;
using dsp::MelNormalization;
using dsp::Waveform;

struct SingerRecord {
  std::string singer_id;
  std::string clip_id;
  Gender gender = Gender::unknown;
  MatrixXf mel;  // T x 80, min-max normalized
  MelNormalization norm;
  std::string source_path;

  Index frames() const { return mel.rows(); }
};

struct DatasetSplits {
  std::vector<std::string> train;  // singer ids
  std::vector<std::string> validation;
  std::vector<std::string> test;
  std::uint64_t seed = 0;

  json to_json() const;
  static DatasetSplits from_json(const json& j);
};

struct TrimOptions {
  double threshold_db = -35.0;
  double chunk_ms = 500.0;
};

/// Mono waveform at `target_rate`; stereo is averaged and peaks above 1 are scaled down.
Waveform load_audio(const fs::path& path, int target_rate = static_cast<int>(kSampleRate));

/// Keeps the chunks whose RMS level is at least the threshold, in order.
Waveform trim_silence(const Waveform& w, const TrimOptions& opt = {});

/// Natural-log mel matrix (T x n_mels).
MatrixXf mel_spectrogram(const Waveform& w, const MelConfig& cfg = {});

/// Trim, log-mel and min-max normalization of one clip.
SingerRecord make_record(const Waveform& w, std::string singer_id, std::string clip_id, Gender gender,
                         const TrimOptions& trim = {}, const MelConfig& cfg = {});

/// Windows of `win` frames every `stride` frames; empty when the input is too short.
std::vector<MatrixXf> window_frames(const MatrixXf& mel, Index win, Index stride);

/// The 128-frame windows of an 80-bin mel matrix.
std::vector<MelWindow> window_chunks(const MatrixXf& mel, Index stride = kWindowFrames);

/// Split by singer: round(train_frac * n) training singers, the remainder split
/// evenly, each subset keeping at least one singer.
DatasetSplits split_dataset(const std::vector<SingerRecord>& records, double train_frac, std::uint64_t seed);
DatasetSplits split_singers(std::vector<std::string> singers, double train_frac, std::uint64_t seed);

/// `singer_id,gender` rows (comma or tab separated); '#' starts a comment.
std::map<std::string, Gender> read_singer_metadata(const fs::path& path);

// Preprocessed clip store: <clip>.mel tensor + <clip>.json sidecar (+ <clip>.wav).
void write_record(const fs::path& dir, const SingerRecord& rec);
SingerRecord read_record(const fs::path& sidecar);
std::vector<SingerRecord> load_records(const fs::path& dir);

std::vector<const SingerRecord*> records_of(const std::vector<SingerRecord>& records,
                                            const std::vector<std::string>& singers);

/// A training example: one window and the singer it came from.
struct LabeledWindow {
  std::string singer_id;
  std::string clip_id;
  MatrixXf mel;
};

std::vector<LabeledWindow> labeled_windows(const std::vector<const SingerRecord*>& records,
                                           Index win = kWindowFrames, Index stride = kWindowFrames);

}  // namespace svclab::corpus
