#pragma once

// Objective and statistical evaluation: embedding similarity, the bottleneck
// probe classifier, Pearson correlation, MOS aggregation, and the planning of
// pitch-matched listening material.

#include "svclab/pitchmatch.hpp"
#include "svclab/svc.hpp"

#include <array>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace svclab::eval {

/// Cosine of the angle between two nonzero vectors; Errc::degenerate for a zero vector.
double cosine_similarity(const VectorXf& a, const VectorXf& b);
inline double cosine_similarity(const SIE& a, const SIE& b) { return cosine_similarity(a.vector(), b.vector()); }

// ---- probe classifier -----------------------------------------------------

struct ProbeConfig {
  long steps = 5000;  // full-batch Adam steps
  double lr = 1e-2;
  double weight_decay = 1e-2;  // L2 penalty on the weights
  double train_frac = 0.8;
  long eval_every = 500;
  std::uint64_t seed = 0;
  bool standardize = true;  // z-score features with training statistics

  json to_json() const;
  static ProbeConfig from_json(const json& j);
};

struct ProbeResult {
  std::vector<std::pair<long, double>> history;  // (step, held-out accuracy)
  double accuracy = 0;
  double train_accuracy = 0;
  Index classes = 0;
  Index train_size = 0;
  Index test_size = 0;

  json to_json() const;
};

/// Single affine layer + softmax trained on rows of `features` (n x d) with a
/// per-class stratified split. Errc::degenerate for fewer than two classes.
ProbeResult probe_features(const MatrixXf& features, const std::vector<std::string>& labels,
                           const ProbeConfig& cfg = {});

/// Probe on flattened content codes labelled by singer.
ProbeResult probe_accuracy(const std::vector<std::pair<ContentCode, std::string>>& codes, const ProbeConfig& cfg = {});

// ---- statistics -----------------------------------------------------------

struct Correlation {
  double r = 0;
  double p = 1;  // two-sided, t distribution with n - 2 degrees of freedom
  Index n = 0;
};

Correlation pearson(std::span<const double> x, std::span<const double> y);

/// I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// Two-sided tail probability of Student's t.
double student_t_two_sided(double t, double df);

// ---- ratings --------------------------------------------------------------

enum class RatingType { naturalness, similarity };
RatingType parse_rating_type(std::string_view s);
std::string_view to_string(RatingType t);

/// Variant label of resynthesized genuine clips.
inline constexpr std::string_view kReferenceVariant = "reference";
inline constexpr std::string_view kNoCondition = "-";

struct RatingRecord {
  std::string listener_id;
  std::string clip_id;
  std::string variant;
  std::string condition;
  RatingType type = RatingType::naturalness;
  int rating = 0;
};

// listener_id,clip_id,variant,condition,rating_type,rating
std::string ratings_csv(const std::vector<RatingRecord>& records);
void write_ratings(const fs::path& path, const std::vector<RatingRecord>& records);
std::vector<RatingRecord> read_ratings(const fs::path& path);

struct MosCell {
  std::string variant;
  std::string condition;
  RatingType type = RatingType::naturalness;
  double mean = 0;
  Index count = 0;
  double std_error = 0;  // sample standard deviation / sqrt(count)
};

struct MosReport {
  std::vector<MosCell> cells;  // conversions only, sorted by variant, condition, type
  std::optional<MosCell> reference;  // naturalness of resynthesized genuine clips
  std::optional<Correlation> naturalness_vs_similarity;  // over cell means
  std::vector<std::string> missing;  // expected cells with no ratings

  const MosCell* find(std::string_view variant, std::string_view condition, RatingType type) const;
  json to_json() const;
  std::string to_text() const;
};

/// Per-cell means. Ratings outside 1..5 are rejected. `variants` lists the
/// cells expected to be present; absent ones are reported and warned about.
MosReport mos_report(const std::vector<RatingRecord>& ratings, const std::vector<std::string>& variants = {});

// ---- listening material ---------------------------------------------------

enum class GenderCondition { MM, MF, FM, FF };
inline constexpr std::array<GenderCondition, 4> kConditions{GenderCondition::MM, GenderCondition::MF,
                                                            GenderCondition::FM, GenderCondition::FF};
std::string_view to_string(GenderCondition c);
GenderCondition parse_condition(std::string_view s);
std::optional<GenderCondition> condition_of(Gender source, Gender target);

struct Cell {
  std::string variant;
  GenderCondition condition = GenderCondition::MM;

  std::string label() const;
  auto operator<=>(const Cell&) const = default;
};

std::vector<Cell> all_cells(const std::vector<std::string>& variants);

/// Every cell once plus `total - cells` distinct cells a second time, shuffled.
std::vector<std::size_t> listener_cell_slots(std::size_t n_cells, std::size_t total, std::mt19937_64& rng);

struct PairCandidate {
  std::string source_singer;
  std::string source_clip;
  std::string target_singer;
  std::string target_clip;
  double delta_st = 0;
};

/// Pitch-matched (source clip, target singer) pairs among `singers`, grouped by gender condition.
std::map<GenderCondition, std::vector<PairCandidate>> matched_pairs(const pitch::Catalog& catalog,
                                                                    const std::map<std::string, Gender>& genders,
                                                                    const std::vector<std::string>& singers,
                                                                    const pitch::MatchOptions& opt = {});

struct ConversionSpec {
  std::string id;
  std::string variant;
  GenderCondition condition = GenderCondition::MM;
  PairCandidate pair;

  json to_json() const;
  static ConversionSpec from_json(const json& j);
};

struct ReferenceSpec {
  std::string id;
  std::string singer;
  std::string clip;
};

struct EvalSet {
  std::uint64_t seed = 0;
  std::vector<ConversionSpec> conversions;
  std::vector<ReferenceSpec> references;

  json to_json() const;
  static EvalSet from_json(const json& j);
};

struct EvalSetOptions {
  std::size_t conversions = 16;
  std::size_t references = 4;
  pitch::MatchOptions match;
};

/// One listener's material: all variant x condition cells, random top-up to
/// `conversions`, plus resynthesis references. Errc::data names a cell with
/// no pitch-matched pair.
EvalSet build_eval_set(const std::vector<std::string>& variants, const pitch::Catalog& catalog,
                       const std::map<std::string, Gender>& genders, const std::vector<std::string>& singers,
                       std::uint64_t seed, const EvalSetOptions& opt = {});

// ---- objective scoring ----------------------------------------------------

struct ConversionScore {
  std::string id;
  std::string variant;
  GenderCondition condition = GenderCondition::MM;
  double to_target = 0;  // cos(E(converted), target SIE)
  double to_source = 0;  // cos(E(converted), source SIE)
};

/// Converts `source_mel` (full clip) and compares the frozen encoder's view of
/// the result with both table entries.
template <typename Scalar>
ConversionScore score_conversion(svc::SvcModel<Scalar>& model, const ConversionSpec& spec,
                                 const MatrixXf& source_mel) {
  const SIE src = model.table.at(spec.pair.source_singer);
  const SIE tgt = model.table.at(spec.pair.target_singer);
  const MatrixXf converted = svc::convert_clip(model, source_mel, src, tgt);
  const SIE e = model.sie_encoder.embed(converted);
  return {spec.id, spec.variant, spec.condition, cosine_similarity(e, tgt), cosine_similarity(e, src)};
}

struct ScoreSummary {
  std::string variant;
  GenderCondition condition = GenderCondition::MM;
  Index count = 0;
  double mean_to_target = 0;
  double mean_to_source = 0;
  double toward_target = 0;  // fraction with to_target > to_source
};

std::vector<ScoreSummary> summarize_scores(const std::vector<ConversionScore>& scores);
std::string scores_csv(const std::vector<ScoreSummary>& summary);

}  // namespace svclab::eval
