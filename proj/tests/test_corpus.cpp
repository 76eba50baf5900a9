#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "svclab/corpus.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

using namespace svclab;
using namespace svclab::corpus;

namespace {

VectorXf sine(double hz, double seconds, double amp, int rate = 16000) {
  const Index n = static_cast<Index>(std::llround(seconds * rate));
  VectorXf x(n);
  for (Index i = 0; i < n; ++i) x(i) = static_cast<float>(amp * std::sin(2 * std::numbers::pi * hz * i / rate));
  return x;
}

// Peak amplitude of a sine whose RMS sits at `db` dBFS.
double amp_for_dbfs(double db) { return std::sqrt(2.0) * std::pow(10.0, db / 20.0); }

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("svclab_corpus_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("load_audio resamples stereo to 16 kHz mono") {
  TempDir tmp;
  const int rate = 44100;
  const VectorXf l = sine(300, 3.0, 0.5, rate);
  // Stereo float file written by hand: RIFF header + interleaved samples.
  const fs::path p = tmp.path / "stereo.wav";
  {
    std::ofstream f(p, std::ios::binary);
    auto u32 = [&](std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
    auto u16 = [&](std::uint16_t v) { f.write(reinterpret_cast<const char*>(&v), 2); };
    const std::uint32_t data_bytes = static_cast<std::uint32_t>(l.size() * 2 * 4);
    f.write("RIFF", 4);
    u32(36 + data_bytes);
    f.write("WAVEfmt ", 8);
    u32(16);
    u16(3);
    u16(2);
    u32(rate);
    u32(rate * 8);
    u16(8);
    u16(32);
    f.write("data", 4);
    u32(data_bytes);
    for (Index i = 0; i < l.size(); ++i) {
      const float a = l(i), b = -l(i) * 0.5f;
      f.write(reinterpret_cast<const char*>(&a), 4);
      f.write(reinterpret_cast<const char*>(&b), 4);
    }
  }
  const Waveform w = load_audio(p);
  CHECK(w.sample_rate == 16000);
  CHECK(w.size() == 48000);
  CHECK(w.samples.cwiseAbs().maxCoeff() <= 1.0f);
}

TEST_CASE("load_audio keeps 16 kHz mono length, reads silence, reports bad paths") {
  TempDir tmp;
  dsp::Waveform in{sine(220, 1.3, 0.3), 16000};
  write_wav(tmp.path / "a.wav", in);
  CHECK(load_audio(tmp.path / "a.wav").size() == in.size());

  dsp::Waveform zeros{VectorXf::Zero(4000), 16000};
  write_wav(tmp.path / "z.wav", zeros);
  const Waveform z = load_audio(tmp.path / "z.wav");
  CHECK(z.size() == 4000);
  CHECK(z.samples.cwiseAbs().maxCoeff() == 0.0f);

  try {
    load_audio(tmp.path / "missing.wav");
    FAIL("expected an ingestion error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ingestion);
    CHECK(std::string(e.what()).find("missing.wav") != std::string::npos);
  }

  dsp::Waveform empty{VectorXf(0), 16000};
  write_wav(tmp.path / "e.wav", empty);
  try {
    load_audio(tmp.path / "e.wav");
    FAIL("expected an empty-input error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::empty_input);
  }
}

TEST_CASE("trim_silence keeps exactly the loud chunks") {
  SUBCASE("silence then tone") {
    VectorXf x(64000);
    x << VectorXf::Zero(32000), sine(300, 2.0, amp_for_dbfs(-10));
    const Waveform out = trim_silence({x, 16000}, {-30, 500});
    CHECK(out.size() == 32000);
    CHECK(out.samples == x.tail(32000));
  }
  SUBCASE("all loud is unchanged") {
    const VectorXf x = sine(300, 2.0, amp_for_dbfs(-10));
    CHECK(trim_silence({x, 16000}, {-30, 500}).samples == x);
  }
  SUBCASE("alternating loud and quiet chunks") {
    VectorXf x(8 * 8000);
    const VectorXf loud = sine(300, 0.5, amp_for_dbfs(-10));
    const VectorXf quiet = sine(300, 0.5, amp_for_dbfs(-50));
    for (Index k = 0; k < 8; ++k) x.segment(k * 8000, 8000) = k % 2 == 0 ? loud : quiet;
    const Waveform out = trim_silence({x, 16000}, {-30, 500});
    // Reference scan keeps chunks 0, 2, 4, 6.
    REQUIRE(out.size() == 32000);
    for (Index k = 0; k < 4; ++k) CHECK(out.samples.segment(k * 8000, 8000) == loud);
    CHECK(trim_silence(out, {-30, 500}).samples == out.samples);
  }
  SUBCASE("nothing above threshold") {
    CHECK_THROWS_AS(trim_silence({VectorXf::Zero(16000), 16000}), Error);
  }
}

TEST_CASE("mel_spectrogram geometry, floor and tone placement") {
  const MelConfig cfg;
  CHECK(cfg.frame_seconds() == doctest::Approx(0.016));

  const Waveform tone{sine(440, 2.0, 1.0), 16000};
  const MatrixXf mel = corpus::mel_spectrogram(tone, cfg);
  CHECK(mel.rows() == 1 + (32000 - 1024) / 256);
  CHECK(mel.cols() == 80);
  // Band 11 (centre 446.87 Hz) is the one nearest 440 Hz on the Slaney scale.
  CHECK(dsp::mel_center_frequencies(cfg)(11) == doctest::Approx(446.8705231795059).epsilon(1e-9));
  for (Index t = 0; t < mel.rows(); ++t) {
    Index arg = 0;
    mel.row(t).maxCoeff(&arg);
    CHECK(arg == 11);
  }
  CHECK(corpus::mel_spectrogram(tone, cfg) == mel);

  const MatrixXf silent = corpus::mel_spectrogram(Waveform{VectorXf::Zero(5000), 16000}, cfg);
  CHECK((silent.array() == cfg.log_floor).all());

  try {
    corpus::mel_spectrogram(Waveform{VectorXf::Zero(1000), 16000}, cfg);
    FAIL("expected too-short");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::too_short);
  }
}

TEST_CASE("window counts") {
  CHECK(window_chunks(MatrixXf::Zero(128, 80)).size() == 1);
  CHECK(window_chunks(MatrixXf::Zero(384, 80)).size() == 3);
  const MatrixXf ramp = Eigen::VectorXf::LinSpaced(200, 0, 199).replicate(1, 80);
  const auto w = window_chunks(ramp, 64);
  REQUIRE(w.size() == 2);
  CHECK(w[0].values()(0, 0) == 0.0f);
  CHECK(w[1].values()(0, 0) == 64.0f);
  CHECK(window_chunks(MatrixXf::Zero(100, 80)).empty());
  for (const auto& m : w) {
    CHECK(m.frames() == 128);
    CHECK(m.bins() == 80);
  }
}

TEST_CASE("split_singers partitions by singer deterministically") {
  auto roster = [](int n) {
    std::vector<std::string> v;
    for (int i = 0; i < n; ++i) v.push_back("s" + std::to_string(i));
    return v;
  };
  const auto a = split_singers(roster(10), 0.8, 7);
  const auto b = split_singers(roster(10), 0.8, 7);
  CHECK(a.train.size() == 8);
  CHECK(a.validation.size() == 1);
  CHECK(a.test.size() == 1);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);

  const auto h = split_singers(roster(100), 0.8, 1);
  CHECK(h.train.size() == 80);
  CHECK(h.validation.size() == 10);
  CHECK(h.test.size() == 10);

  const auto m = split_singers(roster(3), 0.8, 1);
  CHECK(m.train.size() == 1);
  CHECK(m.validation.size() == 1);
  CHECK(m.test.size() == 1);

  CHECK_THROWS_AS(split_singers(roster(2), 0.8, 1), Error);

  // Disjoint and exhaustive for random roster sizes and seeds.
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 3 + static_cast<int>(rng() % 60);
    const auto s = split_singers(roster(n), 0.8, rng());
    std::set<std::string> all;
    for (const auto* part : {&s.train, &s.validation, &s.test}) {
      CHECK(!part->empty());
      all.insert(part->begin(), part->end());
    }
    CHECK(all.size() == static_cast<std::size_t>(n));
    CHECK(s.train.size() + s.validation.size() + s.test.size() == static_cast<std::size_t>(n));
    // Below 10 singers the one-per-subset floor can pull training further from 80%.
    if (n >= 10) CHECK(std::abs(static_cast<double>(s.train.size()) - 0.8 * n) <= 1.0);
  }
}

TEST_CASE("records round-trip through the clip store") {
  TempDir tmp;
  SingerRecord r;
  r.singer_id = "alto1";
  r.clip_id = "alto1_take2";
  r.gender = Gender::female;
  r.mel = MatrixXf::Random(140, 80).cwiseAbs();
  r.norm = {-11.5f, 2.25f};
  r.source_path = "raw/alto1/take2.wav";
  write_record(tmp.path, r);
  const auto all = load_records(tmp.path);
  REQUIRE(all.size() == 1);
  CHECK(all[0].singer_id == r.singer_id);
  CHECK(all[0].gender == Gender::female);
  CHECK(all[0].mel == r.mel);
  CHECK(all[0].norm.max == 2.25f);

  write_text_file(tmp.path / "singers.csv", "# id,gender\nalto1,F\nbass2\tm\n");
  const auto meta = read_singer_metadata(tmp.path / "singers.csv");
  CHECK(meta.at("alto1") == Gender::female);
  CHECK(meta.at("bass2") == Gender::male);
}

TEST_CASE("normalization maps to the unit interval and back") {
  MatrixXf m = MatrixXf::Random(30, 80) * 4.0f;
  const auto n = dsp::fit_normalization(m);
  const MatrixXf u = dsp::normalize(m, n);
  CHECK(u.minCoeff() == doctest::Approx(0.0f));
  CHECK(u.maxCoeff() == doctest::Approx(1.0f));
  CHECK((dsp::denormalize(u, n) - m).cwiseAbs().maxCoeff() < 1e-5f);
}
