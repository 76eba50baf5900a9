#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "svclab/dsp/audio.hpp"
#include "svclab/io.hpp"
#include "svclab/studysvc.hpp"

#include <httplib.h>

#include <fstream>
#include <set>
#include <thread>

using namespace svclab;
using namespace svclab::study;

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

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("svclab_study_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

const std::vector<std::string> kVariants{"recon", "bn-lr", "sie-lr"};

void touch_wav(const fs::path& p) {
  dsp::Waveform w;
  w.samples = VectorXf::Constant(160, 0.1f);
  dsp::write_wav(p, w);
}

// Two clips per cell, six references; audio written into `dir`.
StudyConfig pool_config(const fs::path& dir, std::size_t per_cell = 2, std::size_t refs = 6) {
  StudyConfig cfg;
  cfg.study_id = "pilot";
  cfg.variants = kVariants;
  cfg.listeners_expected = 23;
  cfg.seed = 11;
  for (const auto& cell : eval::all_cells(kVariants))
    for (std::size_t k = 0; k < per_cell; ++k) {
      PoolClip c;
      c.clip_id = cell.variant + "_" + std::string(eval::to_string(cell.condition)) + "_" + std::to_string(k);
      c.variant = cell.variant;
      c.condition = std::string(eval::to_string(cell.condition));
      c.audio = c.clip_id + ".wav";
      c.target_reference = "target_" + c.clip_id + ".wav";
      touch_wav(dir / c.audio);
      touch_wav(dir / c.target_reference);
      cfg.pool.push_back(c);
    }
  for (std::size_t k = 0; k < refs; ++k) {
    PoolClip c;
    c.clip_id = "ref_" + std::to_string(k);
    c.variant = std::string(eval::kReferenceVariant);
    c.condition = std::string(eval::kNoCondition);
    c.audio = c.clip_id + ".wav";
    touch_wav(dir / c.audio);
    cfg.pool.push_back(c);
  }
  return cfg;
}

std::string st_variant_condition(const StudyConfig& cfg, const std::string& clip) {
  for (const auto& c : cfg.pool)
    if (c.clip_id == clip) return c.variant + "," + c.condition;
  return {};
}

}  // namespace

TEST_CASE("creating a study twice conflicts and incomplete pools are named") {
  TempDir tmp;
  auto cfg = pool_config(tmp.path);
  Study::create(tmp.path, cfg);
  CHECK(code_of([&] { Study::create(tmp.path, cfg); }) == Errc::conflict);

  TempDir other;
  auto partial = pool_config(other.path);
  std::erase_if(partial.pool, [](const PoolClip& c) { return c.variant == "bn-lr" && c.condition == "M-F"; });
  try {
    Study::create(other.path, partial);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::data);
    CHECK(std::string(e.what()).find("bn-lr M-F") != std::string::npos);
  }
  auto few = pool_config(other.path, 2, 3);
  CHECK(code_of([&] { few.validate(); }) == Errc::data);
}

TEST_CASE("assignments cover every cell, are idempotent and differ between listeners") {
  TempDir tmp;
  auto st = Study::create(tmp.path, pool_config(tmp.path));
  const Assignment a = st->assign("alice");
  REQUIRE(a.clips.size() == 20);
  CHECK(std::set<std::string>(a.clips.begin(), a.clips.end()).size() == 20);

  std::map<std::string, int> per_cell;
  int refs = 0;
  for (const auto& id : a.clips) {
    const PoolClip& c = st->clip(id);
    if (c.variant == eval::kReferenceVariant)
      ++refs;
    else
      ++per_cell[c.variant + " " + c.condition];
  }
  CHECK(refs == 4);
  CHECK(per_cell.size() == 12);
  int doubled = 0;
  for (const auto& [cell, n] : per_cell) {
    CHECK(n <= 2);
    doubled += n == 2;
  }
  CHECK(doubled == 4);

  CHECK(st->assign("alice").clips == a.clips);
  CHECK(st->assign("alice", 999).clips == a.clips);
  std::set<std::vector<std::string>> seen{a.clips};
  for (int i = 0; i < 22; ++i) seen.insert(st->assign("l" + std::to_string(i)).clips);
  CHECK(seen.size() == 23);
  CHECK(st->listener_count() == 23);
}

TEST_CASE("rating submission validates, overwrites with an audit trail and replays") {
  TempDir tmp;
  auto st = Study::create(tmp.path, pool_config(tmp.path));
  CHECK(st->export_ratings().empty());
  CHECK(st->export_csv() == "listener_id,clip_id,variant,condition,rating_type,rating\n");

  const Assignment a = st->assign("bob");
  const std::string clip = a.clips.front();
  using eval::RatingType;
  CHECK(code_of([&] { st->submit({"bob", clip, RatingType::naturalness, 6}); }) == Errc::rejected);
  CHECK(code_of([&] { st->submit({"bob", clip, RatingType::naturalness, 0}); }) == Errc::rejected);
  CHECK(code_of([&] { st->submit({"nobody", clip, RatingType::naturalness, 3}); }) == Errc::not_found);
  std::string outside;
  for (const auto& c : st->config().pool)
    if (std::find(a.clips.begin(), a.clips.end(), c.clip_id) == a.clips.end()) outside = c.clip_id;
  REQUIRE(!outside.empty());
  CHECK(code_of([&] { st->submit({"bob", outside, RatingType::naturalness, 3}); }) == Errc::rejected);

  CHECK_FALSE(st->submit({"bob", clip, RatingType::naturalness, 2}).superseded);
  const SubmitResult again = st->submit({"bob", clip, RatingType::naturalness, 4});
  CHECK(again.superseded);
  CHECK(again.previous == 2);
  const auto rows = st->export_ratings();
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].rating == 4);
  CHECK(rows[0].variant == st->clip(clip).variant);

  const std::string log = read_text_file(tmp.path / "events.log");
  CHECK(log.find("\"supersedes\":2") != std::string::npos);
  CHECK(st->event_count() == 3);

  auto reopened = Study::open(tmp.path);
  CHECK(reopened->export_csv() == st->export_csv());
  CHECK(reopened->assign("bob").clips == a.clips);
  CHECK(reopened->event_count() == 3);
}

TEST_CASE("a torn trailing event is ignored on replay") {
  TempDir tmp;
  auto st = Study::create(tmp.path, pool_config(tmp.path));
  const Assignment a = st->assign("carol");
  st->submit({"carol", a.clips[0], eval::RatingType::similarity, 5});
  {
    std::ofstream os(tmp.path / "events.log", std::ios::app);
    os << R"({"type":"rating","listener":"car)";
  }
  auto reopened = Study::open(tmp.path);
  CHECK(reopened->export_ratings().size() == 1);
}

TEST_CASE("full study export is complete and deterministic") {
  TempDir tmp;
  auto st = Study::create(tmp.path, pool_config(tmp.path));
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> score(1, 5);
  for (int l = 22; l >= 0; --l) {
    const std::string id = "listener" + std::to_string(l);
    for (const auto& clip : st->assign(id).clips) {
      st->submit({id, clip, eval::RatingType::naturalness, score(rng)});
      st->submit({id, clip, eval::RatingType::similarity, score(rng)});
    }
  }
  const auto rows = st->export_ratings();
  CHECK(rows.size() == 920);
  CHECK(std::is_sorted(rows.begin(), rows.end(), [](const auto& x, const auto& y) {
    return std::tie(x.listener_id, x.clip_id, x.type) < std::tie(y.listener_id, y.clip_id, y.type);
  }));
  const std::string csv = st->export_csv();
  CHECK(Study::open(tmp.path)->export_csv() == csv);
  const fs::path out = tmp.path / "export.csv";
  write_text_file(out, csv);
  CHECK(eval::read_ratings(out).size() == 920);
}

TEST_CASE("HTTP flow: create, assign, fetch audio, rate, export") {
  TempDir tmp;
  const StudyConfig cfg = pool_config(tmp.path);
  StudyServer server(tmp.path);
  const int port = server.bind_any_port();
  std::thread th([&] { server.run(); });
  httplib::Client cli("127.0.0.1", port);
  cli.set_connection_timeout(5);

  auto created = cli.Post("/api/study", cfg.to_json().dump(), "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  auto dup = cli.Post("/api/study", cfg.to_json().dump(), "application/json");
  REQUIRE(dup);
  CHECK(dup->status == 409);

  auto assigned = cli.Get("/api/assignment?listener=dana");
  REQUIRE(assigned);
  REQUIRE(assigned->status == 200);
  const json body = json::parse(assigned->body);
  REQUIRE(body.at("trials").size() == 20);
  CHECK(json::parse(cli.Get("/api/assignment?listener=dana")->body) == body);

  const json& first = body["trials"][0];
  auto audio = cli.Get(first.at("audio_url").get<std::string>());
  REQUIRE(audio);
  CHECK(audio->status == 200);
  CHECK(audio->body.substr(0, 4) == "RIFF");
  CHECK(cli.Get("/api/clips/nope/audio")->status == 404);

  const std::string clip = first.at("clip_id").get<std::string>();
  auto rate = [&](int rating) {
    json r{{"listener", "dana"}, {"clip_id", clip}, {"rating_type", "naturalness"}, {"rating", rating}};
    return cli.Post("/api/ratings", r.dump(), "application/json");
  };
  CHECK(rate(7)->status == 422);
  CHECK(rate(3)->status == 200);
  auto over = rate(5);
  CHECK(json::parse(over->body).at("superseded") == true);

  const json progress = json::parse(cli.Get("/api/assignment?listener=dana")->body);
  CHECK(progress["trials"][0]["rated"] == json::array({"naturalness"}));

  auto exported = cli.Get("/api/export");
  REQUIRE(exported);
  CHECK(exported->body == "listener_id,clip_id,variant,condition,rating_type,rating\ndana," + clip + "," +
                              st_variant_condition(cfg, clip) + ",naturalness,5\n");
  server.stop();
  th.join();
}
