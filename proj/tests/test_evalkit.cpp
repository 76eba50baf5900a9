#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "svclab/dsp/spectral.hpp"
#include "svclab/evalkit.hpp"
#include "svclab/synth.hpp"

#include <numbers>
#include <set>

using namespace svclab;
using namespace svclab::eval;

namespace {

template <typename F>
Errc code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::data;
}

// Singer index written into channel 0 as cos/sin pairs of its multiples.
VectorXf planted_index(int s) {
  VectorXf v(16);
  for (int j = 0; j < 8; ++j) {
    const double a = 2 * std::numbers::pi * s * (j + 1) / 20.0;
    v(2 * j) = static_cast<float>(std::cos(a));
    v(2 * j + 1) = static_cast<float>(std::sin(a));
  }
  return v;
}

std::vector<std::pair<ContentCode, std::string>> gaussian_codes(int singers, int per, std::uint64_t seed,
                                                                bool planted) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0, 1);
  std::vector<std::pair<ContentCode, std::string>> out;
  for (int s = 0; s < singers; ++s)
    for (int k = 0; k < per; ++k) {
      MatrixXf m(16, 16);
      for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
      if (planted) m.col(0) = planted_index(s);
      out.emplace_back(ContentCode(m), "s" + std::to_string(s));
    }
  return out;
}

pitch::PitchRange at(double median) { return {median, median - 1, median + 1, 1.0}; }

// Two male and two female singers with overlapping registers.
pitch::Catalog mixed_catalog(double female_offset = 0.0) {
  pitch::Catalog c;
  c["m1"] = {{"m1_c0", at(55.0)}, {"m1_c1", at(57.0)}};
  c["m2"] = {{"m2_c0", at(55.5)}, {"m2_c1", at(56.5)}};
  c["f1"] = {{"f1_c0", at(56.0 + female_offset)}, {"f1_c1", at(58.0 + female_offset)}};
  c["f2"] = {{"f2_c0", at(56.8 + female_offset)}, {"f2_c1", at(57.5 + female_offset)}};
  return c;
}

const std::map<std::string, Gender> kGenders{
    {"m1", Gender::male}, {"m2", Gender::male}, {"f1", Gender::female}, {"f2", Gender::female}};
const std::vector<std::string> kSingers{"m1", "m2", "f1", "f2"};
const std::vector<std::string> kVariants{"recon", "bn-lr", "sie-lr"};

}  // namespace

TEST_CASE("cosine similarity") {
  VectorXf v(3);
  v << 0.3f, -1.2f, 2.0f;
  CHECK(cosine_similarity(v, v) == doctest::Approx(1.0));
  CHECK(cosine_similarity(v, -v) == doctest::Approx(-1.0));
  VectorXf a(2), b(2);
  a << 1, 0;
  b << 1, 1;
  CHECK(cosine_similarity(a, b) == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-6));
  CHECK(code_of([&] { cosine_similarity(a, VectorXf::Zero(2)); }) == Errc::degenerate);

  std::mt19937_64 rng(5);
  std::normal_distribution<float> n(0, 1);
  for (int i = 0; i < 50; ++i) {
    VectorXf x(8), y(8);
    for (auto& e : x) e = n(rng);
    for (auto& e : y) e = n(rng);
    const double c = cosine_similarity(x, y);
    CHECK(c == cosine_similarity(y, x));
    CHECK(c >= -1.0);
    CHECK(c <= 1.0);
  }
}

TEST_CASE("probe stays at chance on random codes and finds a planted signal") {
  ProbeConfig cfg;
  cfg.steps = 1500;
  const auto chance = probe_accuracy(gaussian_codes(20, 60, 1, false), cfg);
  CHECK(chance.classes == 20);
  CHECK(chance.test_size == 240);
  CHECK(std::abs(chance.accuracy - 0.05) <= 0.03);
  CHECK(!chance.history.empty());

  const auto planted = probe_accuracy(gaussian_codes(20, 60, 2, true), cfg);
  CHECK(planted.accuracy > 0.95);

  // Shuffled labels on the planted codes fall back to chance.
  auto shuffled = gaussian_codes(20, 60, 2, true);
  std::vector<std::string> labels;
  for (const auto& c : shuffled) labels.push_back(c.second);
  std::mt19937_64 rng(9);
  std::shuffle(labels.begin(), labels.end(), rng);
  for (std::size_t i = 0; i < shuffled.size(); ++i) shuffled[i].second = labels[i];
  CHECK(std::abs(probe_accuracy(shuffled, cfg).accuracy - 0.05) <= 0.03);

  auto single = gaussian_codes(1, 10, 3, false);
  CHECK(code_of([&] { probe_accuracy(single, cfg); }) == Errc::degenerate);
}

TEST_CASE("incomplete beta and t tails") {
  CHECK(incomplete_beta(2.5, 0.5, 0.3) == doctest::Approx(0.018927124071945658).epsilon(1e-10));
  CHECK(incomplete_beta(3, 4, 0.8) == doctest::Approx(0.98304).epsilon(1e-10));
  CHECK(student_t_two_sided(2.1, 7) == doctest::Approx(0.0738711962129226).epsilon(1e-10));
  CHECK(student_t_two_sided(0.5, 30) == doctest::Approx(0.6207230048851273).epsilon(1e-10));
  CHECK(student_t_two_sided(0.0, 5) == doctest::Approx(1.0));
}

TEST_CASE("pearson fixtures and invariances") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  std::vector<double> lin, inv;
  for (double v : x) {
    lin.push_back(2 * v + 1);
    inv.push_back(-v);
  }
  CHECK(pearson(x, lin).r == doctest::Approx(1.0));
  CHECK(pearson(x, lin).p == 0.0);
  CHECK(pearson(x, inv).r == doctest::Approx(-1.0));

  const std::vector<double> y{2, 1, 4, 3, 5};
  const Correlation c = pearson(x, y);
  CHECK(c.r == doctest::Approx(0.7999999999999999).epsilon(1e-9));
  CHECK(c.p == doctest::Approx(0.10408803866182799).epsilon(1e-6));

  const std::vector<double> x2{3.1, 2.4, 4.0, 3.6, 2.2, 3.3, 2.9, 3.8};
  const std::vector<double> y2{2.9, 2.0, 4.2, 3.1, 2.5, 3.6, 2.4, 3.5};
  const Correlation c2 = pearson(x2, y2);
  CHECK(c2.r == doctest::Approx(0.8754920091876253).epsilon(1e-9));
  CHECK(c2.p == doctest::Approx(0.004386003506547033).epsilon(1e-6));

  std::vector<double> moved;
  for (double v : y2) moved.push_back(3.5 * v - 7);
  CHECK(pearson(x2, moved).r == doctest::Approx(c2.r).epsilon(1e-12));
  for (auto& v : moved) v = -v;
  CHECK(pearson(x2, moved).r == doctest::Approx(-c2.r).epsilon(1e-12));

  CHECK(code_of([&] { pearson(x, std::vector<double>(5, 1.0)); }) == Errc::degenerate);
  CHECK(code_of([&] { pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2}); }) == Errc::data);
}

TEST_CASE("MOS cell arithmetic") {
  auto rec = [](std::string variant, std::string cond, RatingType t, int r) {
    return RatingRecord{"L1", "c", std::move(variant), std::move(cond), t, r};
  };
  std::vector<RatingRecord> rs{rec("recon", "M-F", RatingType::similarity, 3),
                               rec("recon", "M-F", RatingType::similarity, 5),
                               rec("recon", "M-M", RatingType::naturalness, 4),
                               rec("reference", "-", RatingType::naturalness, 2),
                               rec("reference", "-", RatingType::naturalness, 5),
                               rec("reference", "-", RatingType::similarity, 1)};
  const MosReport rep = mos_report(rs, {"recon"});
  const MosCell* pair = rep.find("recon", "M-F", RatingType::similarity);
  REQUIRE(pair);
  CHECK(pair->mean == 4.0);
  CHECK(pair->count == 2);
  CHECK(pair->std_error == doctest::Approx(1.0).epsilon(1e-12));
  const MosCell* single = rep.find("recon", "M-M", RatingType::naturalness);
  REQUIRE(single);
  CHECK(single->mean == 4.0);
  CHECK(single->count == 1);
  REQUIRE(rep.reference);
  CHECK(rep.reference->mean == 3.5);
  CHECK(rep.reference->count == 2);
  CHECK(rep.cells.size() == 2);
  CHECK(rep.missing.size() == 6);
  CHECK(rep.to_json()["cells"].size() == 2);

  rs.push_back(rec("recon", "M-M", RatingType::naturalness, 6));
  CHECK(code_of([&] { mos_report(rs); }) == Errc::rejected);
}

TEST_CASE("MOS means lie within the cell's ratings; pearson over cell means") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> r(1, 5);
  std::vector<RatingRecord> rs;
  for (const auto& v : kVariants)
    for (auto c : kConditions)
      for (int k = 0; k < 7; ++k) {
        rs.push_back({"L" + std::to_string(k), "x", v, std::string(to_string(c)), RatingType::naturalness, r(rng)});
        rs.push_back({"L" + std::to_string(k), "x", v, std::string(to_string(c)), RatingType::similarity, r(rng)});
      }
  const MosReport rep = mos_report(rs, kVariants);
  CHECK(rep.cells.size() == 24);
  CHECK(rep.missing.empty());
  for (const auto& cell : rep.cells) {
    int lo = 5, hi = 1;
    for (const auto& x : rs)
      if (x.variant == cell.variant && x.condition == cell.condition && x.type == cell.type) {
        lo = std::min(lo, x.rating);
        hi = std::max(hi, x.rating);
      }
    CHECK(cell.mean >= lo);
    CHECK(cell.mean <= hi);
  }
  REQUIRE(rep.naturalness_vs_similarity);
  CHECK(rep.naturalness_vs_similarity->n == 12);
}

TEST_CASE("ratings file round trip") {
  const std::vector<RatingRecord> rs{{"L1", "e1-c00", "recon", "F-M", RatingType::similarity, 2},
                                     {"L2", "e2-r1", "reference", "-", RatingType::naturalness, 5}};
  const fs::path p = fs::temp_directory_path() / "svclab_ratings.csv";
  write_ratings(p, rs);
  const auto back = read_ratings(p);
  REQUIRE(back.size() == 2);
  CHECK(back[0].condition == "F-M");
  CHECK(back[0].type == RatingType::similarity);
  CHECK(back[1].rating == 5);
  write_text_file(p, "listener_id,clip_id,variant,condition,rating_type,rating\nL1,c,recon,M-M,naturalness,x\n");
  CHECK(code_of([&] { read_ratings(p); }) == Errc::format);
  fs::remove(p);
}

TEST_CASE("Griffin-Lim rendering") {
  dsp::MelConfig cfg;
  VectorXf x(16000);
  for (Index i = 0; i < x.size(); ++i) x(i) = 0.5f * static_cast<float>(std::sin(2 * std::numbers::pi * 440.0 * i / 16000.0));
  const MatrixXf mel = dsp::mel_spectrogram({x, 16000}, cfg);
  const dsp::Waveform y = dsp::griffin_lim_log(mel, cfg);
  CHECK(y.sample_rate == 16000);
  const dsp::ComplexMatrix spec = dsp::stft(y.samples, 1024, 256);
  const Eigen::RowVectorXf mag = spec.cwiseAbs().colwise().mean();
  Index peak = 0;
  mag.maxCoeff(&peak);
  CHECK(std::abs(peak * 16000.0 / 1024 - 440.0) <= 0.03 * 440.0);

  const MatrixXf floor = MatrixXf::Constant(40, 80, cfg.log_floor);
  CHECK(dsp::to_dbfs(dsp::rms(dsp::griffin_lim_log(floor, cfg).samples)) < -50.0);

  // Round-trip error on a harmonic fixture (a pure tone leaves most bins at the floor).
  dsp::Waveform sung = synth::render_clip(synth::toy_roster(2, 1, 3)[0], 57.0, 4);
  sung.samples.conservativeResize(32000);
  const MatrixXf sung_mel = dsp::mel_spectrogram(sung, cfg);
  dsp::GriffinLimOptions few, many;
  few.iters = 8;
  many.iters = 64;
  CHECK(dsp::mel_round_trip_error(sung_mel, dsp::griffin_lim_log(sung_mel, cfg, many), cfg) <
        dsp::mel_round_trip_error(sung_mel, dsp::griffin_lim_log(sung_mel, cfg, few), cfg));

  const dsp::MelNormalization norm = dsp::fit_normalization(mel);
  CHECK(dsp::griffin_lim(dsp::normalize(mel, norm), norm, cfg).size() > 0);
  CHECK_THROWS_AS(dsp::griffin_lim(dsp::normalize(mel, norm), std::nullopt, cfg), Error);
}

TEST_CASE("eval set covers every cell with pitch-matched pairs") {
  const pitch::Catalog cat = mixed_catalog();
  std::set<std::vector<std::string>> distinct;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const EvalSet set = build_eval_set(kVariants, cat, kGenders, kSingers, seed);
    REQUIRE(set.conversions.size() == 16);
    CHECK(set.references.size() == 4);
    std::map<Cell, int> counts;
    std::vector<std::string> ids;
    for (const auto& c : set.conversions) {
      ++counts[{c.variant, c.condition}];
      ids.push_back(c.pair.source_clip + ">" + c.pair.target_singer + "/" + c.variant);
      CHECK(condition_of(kGenders.at(c.pair.source_singer), kGenders.at(c.pair.target_singer)) == c.condition);
      const auto matches = pitch::match_targets(pitch::find_clip(cat, c.pair.source_clip).second, cat, {},
                                                c.pair.source_singer);
      CHECK(std::any_of(matches.begin(), matches.end(),
                        [&](const pitch::Match& m) { return m.singer_id == c.pair.target_singer; }));
      CHECK(c.pair.delta_st < 2.0);
    }
    CHECK(counts.size() == 12);
    CHECK(std::count_if(counts.begin(), counts.end(), [](const auto& kv) { return kv.second == 2; }) == 4);
    std::set<std::string> refs;
    for (const auto& r : set.references) refs.insert(r.clip);
    CHECK(refs.size() == 4);
    distinct.insert(ids);

    const EvalSet back = EvalSet::from_json(set.to_json());
    CHECK(back.conversions.size() == 16);
    CHECK(back.conversions[3].pair.target_clip == set.conversions[3].pair.target_clip);
  }
  CHECK(distinct.size() == 3);

  try {
    build_eval_set(kVariants, mixed_catalog(12.0), kGenders, kSingers, 1);
    FAIL("expected a missing-cell error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::data);
    CHECK(std::string(e.what()).find("recon M-F") != std::string::npos);
  }
}

TEST_CASE("listener slots and clip conversion") {
  std::mt19937_64 rng(1);
  const auto slots = listener_cell_slots(12, 16, rng);
  CHECK(slots.size() == 16);
  CHECK(std::set<std::size_t>(slots.begin(), slots.end()).size() == 12);
  CHECK_THROWS_AS(listener_cell_slots(12, 11, rng), Error);

  svc::SvcConfig cfg = svc::SvcConfig::toy();
  cfg.enc_conv_channels = cfg.dec_pre_hidden = cfg.dec_conv_channels = cfg.dec_lstm_hidden = 8;
  cfg.d_sie = 4;
  sie::SieTable table(4, "");
  table.insert("a", SIE::normalized(VectorXf::LinSpaced(4, 1, 4)));
  table.insert("b", SIE::normalized(VectorXf::LinSpaced(4, -1, 2)));
  svc::SvcModel<float> m(svc::SvcNet<float>(cfg, 3), sie::SieEncoder<float>({kMelBins, 8, 1, 4}, 4), table, {});
  const MatrixXf clip = MatrixXf::Random(300, 80).cwiseAbs();
  const MatrixXf out = svc::convert_clip(m, clip, table.at("a"), table.at("b"));
  CHECK(out.rows() == 300);
  CHECK(out.topRows(128) == svc::convert(m, MelWindow(clip.topRows(128)), table.at("a"), table.at("b")).values());
  CHECK(out.bottomRows(44) ==
        svc::convert(m, MelWindow(clip.bottomRows(128)), table.at("a"), table.at("b")).values().bottomRows(44));
  CHECK_THROWS_AS(svc::convert_clip(m, MatrixXf::Zero(100, 80), table.at("a"), table.at("b")), Error);

  ConversionSpec spec{"x", "recon", GenderCondition::MF, {"a", "a0", "b", "b0", 0.3}};
  const ConversionScore s = score_conversion(m, spec, clip);
  CHECK(s.to_target >= -1.0);
  CHECK(s.to_target <= 1.0);
  const auto summary = summarize_scores({s, s});
  REQUIRE(summary.size() == 1);
  CHECK(summary[0].count == 2);
  CHECK(scores_csv(summary).find("recon,M-F,2,") != std::string::npos);
}
