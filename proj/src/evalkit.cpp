#include "svclab/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

namespace svclab::eval {

double cosine_similarity(const VectorXf& a, const VectorXf& b) {
  if (a.size() != b.size()) throw Error(Errc::shape, "cosine similarity of vectors with different sizes");
  const double na = a.cast<double>().norm(), nb = b.cast<double>().norm();
  if (na < SIE::kMinNorm || nb < SIE::kMinNorm) throw Error(Errc::degenerate, "cosine similarity of a zero vector");
  const double c = a.cast<double>().dot(b.cast<double>()) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

// ---- probe ------------------------------------------------------------------

json ProbeConfig::to_json() const {
  return {{"steps", steps}, {"lr", lr}, {"weight_decay", weight_decay}, {"train_frac", train_frac}, {"eval_every", eval_every},
          {"seed", seed},   {"standardize", standardize}};
}

ProbeConfig ProbeConfig::from_json(const json& j) {
  ProbeConfig c;
  c.steps = j.value("steps", c.steps);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.train_frac = j.value("train_frac", c.train_frac);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.seed = j.value("seed", c.seed);
  c.standardize = j.value("standardize", c.standardize);
  return c;
}

json ProbeResult::to_json() const {
  json h = json::array();
  for (const auto& [step, acc] : history) h.push_back({step, acc});
  return {{"accuracy", accuracy}, {"train_accuracy", train_accuracy}, {"classes", classes},
          {"train_size", train_size}, {"test_size", test_size}, {"history", h}};
}

namespace {

double accuracy_of(const nn::Mat<float>& logits, const std::vector<int>& labels) {
  if (labels.empty()) return 0.0;
  Index hits = 0;
  for (Index r = 0; r < logits.rows(); ++r) {
    Index arg = 0;
    logits.row(r).maxCoeff(&arg);
    if (arg == labels[static_cast<std::size_t>(r)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace

ProbeResult probe_features(const MatrixXf& features, const std::vector<std::string>& labels, const ProbeConfig& cfg) {
  if (static_cast<Index>(labels.size()) != features.rows())
    throw Error(Errc::shape, "probe: one label per feature row is required");
  if (cfg.steps < 1 || cfg.lr <= 0 || cfg.train_frac <= 0 || cfg.train_frac >= 1)
    throw Error(Errc::config, "probe: steps, lr and train_frac must be positive (train_frac < 1)");

  std::map<std::string, std::vector<Index>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(static_cast<Index>(i));
  if (by_class.size() < 2) throw Error(Errc::degenerate, "probe needs at least two classes");
  std::size_t lo = labels.size(), hi = 0;
  for (const auto& [_, idx] : by_class) {
    lo = std::min(lo, idx.size());
    hi = std::max(hi, idx.size());
  }
  if (hi > 3 * lo)
    log_warn("probe: class sizes are unbalanced (" + std::to_string(hi) + " vs " + std::to_string(lo) + ")");

  // Stratified split.
  std::mt19937_64 rng(cfg.seed);
  std::vector<Index> train_rows, test_rows;
  std::vector<int> train_y, test_y;
  int cls = 0;
  for (auto& [_, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n = static_cast<std::ptrdiff_t>(idx.size());
    auto n_train = static_cast<std::ptrdiff_t>(std::lround(cfg.train_frac * static_cast<double>(n)));
    n_train = n > 1 ? std::clamp<std::ptrdiff_t>(n_train, 1, n - 1) : n;
    for (std::ptrdiff_t k = 0; k < n; ++k) {
      (k < n_train ? train_rows : test_rows).push_back(idx[static_cast<std::size_t>(k)]);
      (k < n_train ? train_y : test_y).push_back(cls);
    }
    ++cls;
  }

  const Index d = features.cols();
  MatrixXf Xtr(static_cast<Index>(train_rows.size()), d), Xte(static_cast<Index>(test_rows.size()), d);
  for (std::size_t i = 0; i < train_rows.size(); ++i) Xtr.row(static_cast<Index>(i)) = features.row(train_rows[i]);
  for (std::size_t i = 0; i < test_rows.size(); ++i) Xte.row(static_cast<Index>(i)) = features.row(test_rows[i]);
  if (cfg.standardize) {
    const Eigen::RowVectorXf mean = Xtr.colwise().mean();
    Eigen::RowVectorXf sd = ((Xtr.rowwise() - mean).array().square().colwise().mean()).sqrt();
    sd = (sd.array() > 1e-8f).select(sd, 1.0f);
    Xtr = (Xtr.rowwise() - mean).array().rowwise() / sd.array();
    if (Xte.rows() > 0) Xte = (Xte.rowwise() - mean).array().rowwise() / sd.array();
  }

  std::mt19937_64 init(cfg.seed + 1);
  nn::Linear<float> layer("probe", d, cls, init);
  nn::ParamList<float> params;
  layer.collect(params);
  nn::Adam<float> adam({static_cast<float>(cfg.lr)});

  auto logits_of = [&](const MatrixXf& X) {
    nn::Tape<float> t;
    return nn::Mat<float>(t.value(layer(t, t.constant(X))));
  };
  ProbeResult res;
  res.classes = cls;
  res.train_size = Xtr.rows();
  res.test_size = Xte.rows();
  for (long step = 1; step <= cfg.steps; ++step) {
    nn::Tape<float> t;
    nn::zero_grads(params);
    nn::Var loss = nn::softmax_cross_entropy(t, layer(t, t.constant(Xtr)), train_y);
    t.backward(loss);
    if (cfg.weight_decay > 0) layer.weight.grad += static_cast<float>(cfg.weight_decay) * layer.weight.value;
    adam.step(params);
    if (cfg.eval_every > 0 && (step % cfg.eval_every == 0 || step == cfg.steps))
      res.history.emplace_back(step, accuracy_of(logits_of(Xte), test_y));
  }
  res.accuracy = accuracy_of(logits_of(Xte), test_y);
  res.train_accuracy = accuracy_of(logits_of(Xtr), train_y);
  return res;
}

ProbeResult probe_accuracy(const std::vector<std::pair<ContentCode, std::string>>& codes, const ProbeConfig& cfg) {
  if (codes.empty()) throw Error(Errc::degenerate, "probe needs at least two classes");
  const Index d = codes.front().first.values().size();
  MatrixXf X(static_cast<Index>(codes.size()), d);
  std::vector<std::string> y;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    X.row(static_cast<Index>(i)) = codes[i].first.flattened().transpose();
    y.push_back(codes[i].second);
  }
  return probe_features(X, y, cfg);
}

// ---- statistics -----------------------------------------------------------

namespace {

// Continued fraction for the incomplete beta function (modified Lentz).
double beta_cf(double a, double b, double x) {
  constexpr double tiny = 1e-300, eps = 1e-15;
  const double qab = a + b, qap = a + 1, qam = a - 1;
  double c = 1, d = 1 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1 / d;
  double h = d;
  for (int m = 1; m <= 500; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1) < eps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (a <= 0 || b <= 0) throw Error(Errc::config, "incomplete beta needs positive shape parameters");
  if (x <= 0) return 0.0;
  if (x >= 1) return 1.0;
  const double front =
      std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x));
  if (x < (a + 1) / (a + b + 2)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1 - x) / b;
}

double student_t_two_sided(double t, double df) {
  if (df <= 0) throw Error(Errc::config, "t distribution needs positive degrees of freedom");
  if (!std::isfinite(t)) return 0.0;
  return incomplete_beta(df / 2, 0.5, df / (df + t * t));
}

Correlation pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(Errc::shape, "pearson: samples differ in length");
  if (x.size() < 3) throw Error(Errc::data, "pearson needs at least 3 pairs");
  const auto n = static_cast<Index>(x.size());
  const Eigen::Map<const Eigen::VectorXd> xv(x.data(), n), yv(y.data(), n);
  const Eigen::VectorXd dx = xv.array() - xv.mean(), dy = yv.array() - yv.mean();
  const double sxx = dx.squaredNorm(), syy = dy.squaredNorm();
  if (sxx == 0 || syy == 0) throw Error(Errc::degenerate, "pearson: a sample has zero variance");
  Correlation c;
  c.n = n;
  c.r = std::clamp(dx.dot(dy) / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = static_cast<double>(n - 2);
  if (std::abs(c.r) >= 1.0)
    c.p = 0.0;
  else
    c.p = student_t_two_sided(c.r * std::sqrt(df / (1 - c.r * c.r)), df);
  return c;
}

// ---- ratings --------------------------------------------------------------

RatingType parse_rating_type(std::string_view s) {
  if (s == "naturalness") return RatingType::naturalness;
  if (s == "similarity") return RatingType::similarity;
  throw Error(Errc::format, "unknown rating type '" + std::string(s) + "'");
}

std::string_view to_string(RatingType t) { return t == RatingType::naturalness ? "naturalness" : "similarity"; }

std::string ratings_csv(const std::vector<RatingRecord>& records) {
  std::ostringstream os;
  os << "listener_id,clip_id,variant,condition,rating_type,rating\n";
  for (const auto& r : records)
    os << r.listener_id << ',' << r.clip_id << ',' << r.variant << ',' << r.condition << ',' << to_string(r.type)
       << ',' << r.rating << '\n';
  return os.str();
}

void write_ratings(const fs::path& path, const std::vector<RatingRecord>& records) {
  write_text_file(path, ratings_csv(records));
}

std::vector<RatingRecord> read_ratings(const fs::path& path) {
  std::istringstream in(read_text_file(path));
  std::vector<RatingRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.rfind("listener_id", 0) == 0) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (f.size() != 6) throw Error(Errc::format, where + ": expected 6 fields");
    RatingRecord r{f[0], f[1], f[2], f[3], parse_rating_type(f[4]), 0};
    try {
      std::size_t used = 0;
      r.rating = std::stoi(f[5], &used);
      if (used != f[5].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(Errc::format, where + ": rating is not an integer");
    }
    out.push_back(std::move(r));
  }
  return out;
}

const MosCell* MosReport::find(std::string_view variant, std::string_view condition, RatingType type) const {
  for (const auto& c : cells)
    if (c.variant == variant && c.condition == condition && c.type == type) return &c;
  return nullptr;
}

json MosReport::to_json() const {
  auto cell_json = [](const MosCell& c) {
    return json{{"variant", c.variant}, {"condition", c.condition}, {"rating_type", std::string(to_string(c.type))},
                {"mean", c.mean},       {"count", c.count},         {"stderr", c.std_error}};
  };
  json j;
  j["cells"] = json::array();
  for (const auto& c : cells) j["cells"].push_back(cell_json(c));
  j["reference"] = reference ? cell_json(*reference) : json(nullptr);
  if (naturalness_vs_similarity)
    j["naturalness_vs_similarity"] = {{"r", naturalness_vs_similarity->r},
                                      {"p", naturalness_vs_similarity->p},
                                      {"n", naturalness_vs_similarity->n}};
  j["missing"] = missing;
  return j;
}

std::string MosReport::to_text() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  os << "variant condition type mean stderr count\n";
  for (const auto& c : cells)
    os << c.variant << ' ' << c.condition << ' ' << to_string(c.type) << ' ' << c.mean << ' ' << c.std_error << ' '
       << c.count << '\n';
  if (reference)
    os << "reference naturalness " << reference->mean << ' ' << reference->std_error << ' ' << reference->count
       << '\n';
  if (naturalness_vs_similarity)
    os << "pearson(naturalness, similarity) over cell means: r=" << naturalness_vs_similarity->r
       << " p=" << naturalness_vs_similarity->p << " n=" << naturalness_vs_similarity->n << '\n';
  for (const auto& m : missing) os << "no ratings: " << m << '\n';
  return os.str();
}

namespace {

MosCell summarize(std::string variant, std::string condition, RatingType type, const std::vector<int>& values) {
  MosCell c{std::move(variant), std::move(condition), type, 0, static_cast<Index>(values.size()), 0};
  const double n = static_cast<double>(values.size());
  c.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0;
    for (int v : values) ss += (v - c.mean) * (v - c.mean);
    c.std_error = std::sqrt(ss / (n - 1)) / std::sqrt(n);
  }
  return c;
}

}  // namespace

MosReport mos_report(const std::vector<RatingRecord>& ratings, const std::vector<std::string>& variants) {
  using Key = std::tuple<std::string, std::string, RatingType>;
  std::map<Key, std::vector<int>> groups;
  std::vector<int> reference;
  for (const auto& r : ratings) {
    if (r.rating < 1 || r.rating > 5)
      throw Error(Errc::rejected, "rating " + std::to_string(r.rating) + " from listener " + r.listener_id +
                                      " for clip " + r.clip_id + " is outside 1..5");
    if (r.variant == kReferenceVariant) {
      if (r.type == RatingType::naturalness) reference.push_back(r.rating);
      continue;
    }
    groups[{r.variant, r.condition, r.type}].push_back(r.rating);
  }
  MosReport rep;
  for (const auto& [key, values] : groups)
    rep.cells.push_back(summarize(std::get<0>(key), std::get<1>(key), std::get<2>(key), values));
  if (!reference.empty())
    rep.reference = summarize(std::string(kReferenceVariant), std::string(kNoCondition), RatingType::naturalness,
                              reference);

  for (const auto& v : variants)
    for (auto c : kConditions)
      for (auto t : {RatingType::naturalness, RatingType::similarity})
        if (!rep.find(v, to_string(c), t)) {
          rep.missing.push_back(v + " " + std::string(to_string(c)) + " " + std::string(to_string(t)));
          log_warn("MOS report: no " + std::string(to_string(t)) + " ratings for " + v + " " +
                   std::string(to_string(c)));
        }

  std::vector<double> nat, sim;
  for (const auto& c : rep.cells)
    if (c.type == RatingType::naturalness)
      if (const MosCell* s = rep.find(c.variant, c.condition, RatingType::similarity)) {
        nat.push_back(c.mean);
        sim.push_back(s->mean);
      }
  if (nat.size() >= 3) {
    try {
      rep.naturalness_vs_similarity = pearson(nat, sim);
    } catch (const Error& e) {
      if (e.code() != Errc::degenerate) throw;
    }
  }
  return rep;
}

// ---- listening material ---------------------------------------------------

std::string_view to_string(GenderCondition c) {
  switch (c) {
    case GenderCondition::MM: return "M-M";
    case GenderCondition::MF: return "M-F";
    case GenderCondition::FM: return "F-M";
    case GenderCondition::FF: return "F-F";
  }
  return "?";
}

GenderCondition parse_condition(std::string_view s) {
  for (auto c : kConditions)
    if (to_string(c) == s) return c;
  throw Error(Errc::format, "unknown gender condition '" + std::string(s) + "'");
}

std::optional<GenderCondition> condition_of(Gender source, Gender target) {
  if (source == Gender::unknown || target == Gender::unknown) return std::nullopt;
  if (source == Gender::male) return target == Gender::male ? GenderCondition::MM : GenderCondition::MF;
  return target == Gender::male ? GenderCondition::FM : GenderCondition::FF;
}

std::string Cell::label() const { return variant + " " + std::string(to_string(condition)); }

std::vector<Cell> all_cells(const std::vector<std::string>& variants) {
  std::vector<Cell> out;
  for (const auto& v : variants)
    for (auto c : kConditions) out.push_back({v, c});
  return out;
}

std::vector<std::size_t> listener_cell_slots(std::size_t n_cells, std::size_t total, std::mt19937_64& rng) {
  if (total < n_cells || total > 2 * n_cells)
    throw Error(Errc::config, "cannot spread " + std::to_string(total) + " clips over " + std::to_string(n_cells) +
                                  " cells with at most one repeat each");
  std::vector<std::size_t> slots(n_cells);
  std::iota(slots.begin(), slots.end(), 0);
  std::vector<std::size_t> extra = slots;
  std::shuffle(extra.begin(), extra.end(), rng);
  slots.insert(slots.end(), extra.begin(), extra.begin() + static_cast<std::ptrdiff_t>(total - n_cells));
  std::shuffle(slots.begin(), slots.end(), rng);
  return slots;
}

std::map<GenderCondition, std::vector<PairCandidate>> matched_pairs(const pitch::Catalog& catalog,
                                                                    const std::map<std::string, Gender>& genders,
                                                                    const std::vector<std::string>& singers,
                                                                    const pitch::MatchOptions& opt) {
  pitch::Catalog pool;
  for (const auto& s : singers)
    if (auto it = catalog.find(s); it != catalog.end()) pool[s] = it->second;
  std::map<GenderCondition, std::vector<PairCandidate>> out;
  if (pool.size() < 2) return out;
  auto gender_of = [&](const std::string& s) {
    auto it = genders.find(s);
    return it == genders.end() ? Gender::unknown : it->second;
  };
  for (const auto& [singer, clips] : pool)
    for (const auto& clip : clips)
      for (const auto& m : pitch::match_targets(clip.range, pool, opt, singer))
        if (auto cond = condition_of(gender_of(singer), gender_of(m.singer_id)))
          out[*cond].push_back({singer, clip.clip_id, m.singer_id, m.clip_id, m.delta_st});
  return out;
}

json ConversionSpec::to_json() const {
  return {{"id", id},
          {"variant", variant},
          {"condition", std::string(to_string(condition))},
          {"source_singer", pair.source_singer},
          {"source_clip", pair.source_clip},
          {"target_singer", pair.target_singer},
          {"target_clip", pair.target_clip},
          {"delta_st", pair.delta_st}};
}

ConversionSpec ConversionSpec::from_json(const json& j) {
  ConversionSpec s;
  s.id = j.at("id").get<std::string>();
  s.variant = j.at("variant").get<std::string>();
  s.condition = parse_condition(j.at("condition").get<std::string>());
  s.pair = {j.at("source_singer").get<std::string>(), j.at("source_clip").get<std::string>(),
            j.at("target_singer").get<std::string>(), j.at("target_clip").get<std::string>(),
            j.at("delta_st").get<double>()};
  return s;
}

json EvalSet::to_json() const {
  json j{{"seed", seed}, {"conversions", json::array()}, {"references", json::array()}};
  for (const auto& c : conversions) j["conversions"].push_back(c.to_json());
  for (const auto& r : references) j["references"].push_back({{"id", r.id}, {"singer", r.singer}, {"clip", r.clip}});
  return j;
}

EvalSet EvalSet::from_json(const json& j) {
  EvalSet e;
  e.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& c : j.at("conversions")) e.conversions.push_back(ConversionSpec::from_json(c));
  for (const auto& r : j.at("references"))
    e.references.push_back({r.at("id").get<std::string>(), r.at("singer").get<std::string>(),
                            r.at("clip").get<std::string>()});
  return e;
}

EvalSet build_eval_set(const std::vector<std::string>& variants, const pitch::Catalog& catalog,
                       const std::map<std::string, Gender>& genders, const std::vector<std::string>& singers,
                       std::uint64_t seed, const EvalSetOptions& opt) {
  if (variants.empty()) throw Error(Errc::config, "evaluation needs at least one model variant");
  const std::vector<Cell> cells = all_cells(variants);
  const auto pairs = matched_pairs(catalog, genders, singers, opt.match);
  std::vector<std::string> missing;
  for (const auto& c : cells)
    if (!pairs.contains(c.condition)) missing.push_back(c.label());
  if (!missing.empty()) {
    std::string msg = "no pitch-matched pair for cell";
    for (std::size_t i = 0; i < missing.size(); ++i) msg += (i ? ", " : " ") + missing[i];
    throw Error(Errc::data, msg);
  }

  std::mt19937_64 rng(seed);
  EvalSet set;
  set.seed = seed;
  std::map<std::size_t, std::size_t> used;  // cell -> candidate already drawn
  std::size_t k = 0;
  for (std::size_t slot : listener_cell_slots(cells.size(), opt.conversions, rng)) {
    const Cell& cell = cells[slot];
    const auto& pool = pairs.at(cell.condition);
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::size_t choice = pick(rng);
    if (auto it = used.find(slot); it != used.end() && pool.size() > 1)
      while (choice == it->second) choice = pick(rng);
    used[slot] = choice;
    std::ostringstream id;
    id << 'e' << seed << "-c" << std::setw(2) << std::setfill('0') << k++;
    set.conversions.push_back({id.str(), cell.variant, cell.condition, pool[choice]});
  }

  std::vector<ReferenceSpec> clips;
  for (const auto& s : singers)
    if (auto it = catalog.find(s); it != catalog.end())
      for (const auto& c : it->second) clips.push_back({"", s, c.clip_id});
  if (clips.size() < opt.references)
    throw Error(Errc::data, "only " + std::to_string(clips.size()) + " clips available for " +
                                std::to_string(opt.references) + " references");
  std::shuffle(clips.begin(), clips.end(), rng);
  for (std::size_t r = 0; r < opt.references; ++r) {
    clips[r].id = "e" + std::to_string(seed) + "-r" + std::to_string(r);
    set.references.push_back(clips[r]);
  }
  return set;
}

std::vector<ScoreSummary> summarize_scores(const std::vector<ConversionScore>& scores) {
  std::map<std::pair<std::string, GenderCondition>, ScoreSummary> acc;
  for (const auto& s : scores) {
    auto& a = acc[{s.variant, s.condition}];
    a.variant = s.variant;
    a.condition = s.condition;
    ++a.count;
    a.mean_to_target += s.to_target;
    a.mean_to_source += s.to_source;
    a.toward_target += s.to_target > s.to_source ? 1.0 : 0.0;
  }
  std::vector<ScoreSummary> out;
  for (auto& [_, a] : acc) {
    const double n = static_cast<double>(a.count);
    a.mean_to_target /= n;
    a.mean_to_source /= n;
    a.toward_target /= n;
    out.push_back(a);
  }
  return out;
}

std::string scores_csv(const std::vector<ScoreSummary>& summary) {
  std::ostringstream os;
  os << "variant,condition,count,cos_target,cos_source,toward_target\n" << std::setprecision(6);
  for (const auto& s : summary)
    os << s.variant << ',' << to_string(s.condition) << ',' << s.count << ',' << s.mean_to_target << ','
       << s.mean_to_source << ',' << s.toward_target << '\n';
  return os.str();
}

}  // namespace svclab::eval
