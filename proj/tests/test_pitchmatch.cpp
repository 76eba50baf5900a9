#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "svclab/pitchmatch.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace svclab;
using namespace svclab::pitch;

namespace {

VectorXf tone(double hz, double seconds, double amp = 0.5) {
  const Index n = static_cast<Index>(seconds * 16000);
  VectorXf x(n);
  for (Index i = 0; i < n; ++i) x(i) = static_cast<float>(amp * std::sin(2 * std::numbers::pi * hz * i / 16000.0));
  return x;
}

double median_hz(const VectorXf& f0, Index from, Index to) {
  std::vector<double> v;
  for (Index i = from; i < to; ++i)
    if (f0(i) > 0) v.push_back(f0(i));
  return percentile(v, 50);
}

PitchRange at(double median) { return {median, median - 1, median + 1, 1.0}; }

Catalog planted() {
  Catalog c;
  const double medians[] = {58, 59.5, 60.4, 63, 71};
  for (int i = 0; i < 5; ++i) c["s" + std::to_string(i)].push_back({"c" + std::to_string(i), at(medians[i])});
  return c;
}

}  // namespace

TEST_CASE("pure tone F0") {
  const F0Contour c = extract_f0({tone(220, 2.0), 16000});
  CHECK(c.frames() == 1 + (32000 - 1024) / 256);
  CHECK(c.frame_hop == doctest::Approx(0.016));
  CHECK(c.voiced_fraction() > 0.9);
  CHECK(median_hz(c.f0_hz, 0, c.frames()) == doctest::Approx(220).epsilon(0.01));
  const PitchRange r = pitch_range(c);
  CHECK(r.median_st == doctest::Approx(57).epsilon(0.002));
}

TEST_CASE("white noise is mostly unvoiced") {
  std::mt19937_64 rng(3);
  std::normal_distribution<float> n(0, 0.2f);
  VectorXf x(32000);
  for (auto& v : x) v = n(rng);
  CHECK(extract_f0({x, 16000}).voiced_fraction() < 0.2);
}

TEST_CASE("two-note contour is tracked per half") {
  VectorXf x(32000);
  x << tone(220, 1.0), tone(440, 1.0);
  const F0Contour c = extract_f0({x, 16000});
  // Frames wholly inside each half (frame k covers samples 256k .. 256k + 1023).
  const Index first_end = (16000 - 1024) / 256;
  const Index second_start = 16000 / 256 + 1;
  CHECK(median_hz(c.f0_hz, 0, first_end) == doctest::Approx(220).epsilon(0.01));
  CHECK(median_hz(c.f0_hz, second_start, c.frames()) == doctest::Approx(440).epsilon(0.01));
}

TEST_CASE("silence is unvoiced and short input is rejected") {
  const F0Contour c = extract_f0({VectorXf::Zero(8000), 16000});
  CHECK(c.voiced_fraction() == 0.0);
  try {
    pitch_range(c);
    FAIL("expected no-voicing");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::no_voicing);
  }
  CHECK_THROWS_AS(extract_f0({VectorXf::Zero(500), 16000}), Error);
}

TEST_CASE("pitch_range closed forms") {
  F0Contour c;
  c.f0_hz = VectorXf::Constant(50, 440.0f);
  PitchRange r = pitch_range(c);
  CHECK(r.median_st == 69.0);
  CHECK(r.p10_st == 69.0);
  CHECK(r.p90_st == 69.0);

  c.f0_hz.setConstant(220.0f);
  CHECK(pitch_range(c).median_st == doctest::Approx(57.0));

  c.f0_hz.resize(100);
  c.f0_hz << VectorXf::Constant(50, 220.0f), VectorXf::Constant(50, 440.0f);
  r = pitch_range(c);
  CHECK(r.p10_st == doctest::Approx(57.0));
  CHECK(r.p90_st == doctest::Approx(69.0));
  CHECK(r.median_st == doctest::Approx(63.0));
  CHECK(r.p10_st <= r.median_st);
  CHECK(r.median_st <= r.p90_st);

  // Unvoiced frames are ignored.
  c.f0_hz << VectorXf::Constant(50, 0.0f), VectorXf::Constant(50, 440.0f);
  r = pitch_range(c);
  CHECK(r.median_st == doctest::Approx(69.0));
  CHECK(r.voiced_fraction == 0.5);
}

TEST_CASE("match_targets tolerance, ordering and exclusions") {
  Catalog one;
  one["t"].push_back({"a", at(61)});
  CHECK(match_targets(at(60), one).size() == 1);
  one["t"][0].range = at(72);
  CHECK(match_targets(at(60), one).empty());

  const auto m = match_targets(at(60), planted());
  REQUIRE(m.size() == 2);
  CHECK(m[0].singer_id == "s2");
  CHECK(m[0].delta_st == doctest::Approx(0.4));
  CHECK(m[1].singer_id == "s1");
  // 58 sits exactly on the tolerance boundary and is left out.
  CHECK(std::none_of(m.begin(), m.end(), [](const Match& x) { return x.singer_id == "s0"; }));

  CHECK(match_targets(at(60), planted(), {}, "s2").size() == 1);
  CHECK_THROWS_AS(match_targets(at(60), Catalog{}), Error);
  CHECK_THROWS_AS(match_targets(at(60), planted(), {0.0, false}), Error);

  // The closest of a singer's clips represents it.
  Catalog multi;
  multi["x"] = {{"far", at(61.5)}, {"near", at(60.2)}};
  const auto mm = match_targets(at(60), multi);
  REQUIRE(mm.size() == 1);
  CHECK(mm[0].clip_id == "near");

  // Overlap filter.
  Catalog narrow;
  narrow["y"].push_back({"c", {61.5, 61.4, 61.6, 1.0}});
  const PitchRange src{60, 59.9, 60.1, 1.0};
  CHECK(match_targets(src, narrow).size() == 1);
  CHECK(match_targets(src, narrow, {2.0, true}).empty());
}

TEST_CASE("matching properties over random catalogs") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> med(48, 72), shift(-24, 24), tol(0.5, 4);
  for (int trial = 0; trial < 100; ++trial) {
    Catalog c;
    const int singers = 2 + static_cast<int>(rng() % 10);
    for (int s = 0; s < singers; ++s)
      for (int k = 0; k < 1 + static_cast<int>(rng() % 4); ++k)
        c["s" + std::to_string(s)].push_back({"s" + std::to_string(s) + "_" + std::to_string(k), at(med(rng))});
    const PitchRange src = at(med(rng));
    const double t = tol(rng);
    const auto base = match_targets(src, c, {t, false}, "s0");

    // Transposition equivariance.
    const double d = shift(rng);
    Catalog moved = c;
    for (auto& [_, clips] : moved)
      for (auto& clip : clips) clip.range.median_st += d;
    PitchRange src_moved = src;
    src_moved.median_st += d;
    const auto shifted = match_targets(src_moved, moved, {t, false}, "s0");
    REQUIRE(shifted.size() == base.size());
    for (std::size_t i = 0; i < base.size(); ++i) CHECK(shifted[i].singer_id == base[i].singer_id);

    // Monotone in tolerance.
    const auto wider = match_targets(src, c, {t + 1.0, false}, "s0");
    for (const auto& b : base)
      CHECK(std::any_of(wider.begin(), wider.end(), [&](const Match& w) { return w.singer_id == b.singer_id; }));

    for (const auto& b : base) {
      CHECK(b.singer_id != "s0");
      CHECK(b.delta_st <= t);
    }
  }
}

TEST_CASE("catalog file round trip") {
  const fs::path p = fs::temp_directory_path() / "svclab_catalog.csv";
  const Catalog c = planted();
  write_catalog(p, c);
  const Catalog back = read_catalog(p);
  fs::remove(p);
  REQUIRE(back.size() == 5);
  CHECK(back.at("s2")[0].range.median_st == 60.4);
  CHECK(find_clip(back, "c3").first == "s3");
  CHECK_THROWS_AS(find_clip(back, "nope"), Error);
}
