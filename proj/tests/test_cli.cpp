#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "commands.hpp"

#include "svclab/dsp/audio.hpp"
#include "svclab/log.hpp"
#include "svclab/studysvc.hpp"

#include <random>

using namespace svclab;
using namespace svclab::cli;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("svclab_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

const CommandSpec& command(const std::string& name) {
  for (const auto& c : commands())
    if (c.name == name) return c;
  FAIL("no command " << name);
  return commands().front();
}

EnvLookup env_of(std::map<std::string, std::string> vars) {
  return [vars](const std::string& k) -> std::optional<std::string> {
    if (auto it = vars.find(k); it != vars.end()) return it->second;
    return std::nullopt;
  };
}

int call(std::vector<std::string> args, const EnvLookup& env = env_of({})) {
  args.insert(args.begin(), "svc-lab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), env);
}

}  // namespace

TEST_CASE("config precedence: default < file < environment < flag") {
  const auto& cmd = command("train-svc");
  const std::map<std::string, std::string> required{{"data", "d"}, {"table", "t"}, {"sie-ckpt", "s"}};
  json r = resolve_config(cmd, json::object(), required, env_of({}));
  CHECK(r["iters"] == 500000);
  CHECK(r["lr"] == doctest::Approx(1e-4));

  const json file{{"iters", 900}, {"lr", 5e-4}, {"train-svc", {{"iters", 800}, {"batch", 4}}}};
  r = resolve_config(cmd, file, required, env_of({}));
  CHECK(r["iters"] == 800);
  CHECK(r["batch"] == 4);
  CHECK(r["lr"] == doctest::Approx(5e-4));

  r = resolve_config(cmd, file, required, env_of({{"SVCLAB_ITERS", "700"}}));
  CHECK(r["iters"] == 700);

  auto flags = required;
  flags["iters"] = "600";
  r = resolve_config(cmd, file, flags, env_of({{"SVCLAB_ITERS", "700"}}));
  CHECK(r["iters"] == 600);
  CHECK(r["iters"].is_number_integer());
}

TEST_CASE("config resolution rejects bad input") {
  const auto& cmd = command("train-svc");
  CHECK_THROWS_AS(resolve_config(cmd, json::object(), {{"data", "d"}}, env_of({})), Error);
  const std::map<std::string, std::string> ok{{"data", "d"}, {"table", "t"}, {"sie-ckpt", "s"}};
  auto bad = ok;
  bad["iters"] = "12x";
  CHECK_THROWS_AS(resolve_config(cmd, json::object(), bad, env_of({})), Error);
  CHECK_THROWS_AS(resolve_config(cmd, json{{"train-svc", {{"itres", 5}}}}, ok, env_of({})), Error);
  CHECK_THROWS_AS(resolve_config(cmd, json{{"iters", 1.5}}, ok, env_of({})), Error);
  CHECK(env_name("sie-ckpt") == "SVCLAB_SIE_CKPT");
}

TEST_CASE("config hash depends on the command and every value") {
  const auto& cmd = command("build-table");
  const json a = resolve_config(cmd, json::object(), {{"ckpt", "c"}, {"data", "d"}}, env_of({}));
  const json b = resolve_config(cmd, json::object(), {{"ckpt", "c"}, {"data", "e"}}, env_of({}));
  CHECK(config_hash("build-table", a) == config_hash("build-table", a));
  CHECK(config_hash("build-table", a) != config_hash("build-table", b));
  CHECK(config_hash("build-table", a) != config_hash("probe", a));
}

TEST_CASE("usage errors exit with status 2") {
  set_log_level(LogLevel::quiet);
  CHECK(call({}) == 2);
  CHECK(call({"frobnicate"}) == 2);
  CHECK(call({"convert", "--model", "m.ckpt"}) == 2);
  CHECK(call({"train-sie", "--data", "d", "--iters", "many"}) == 2);
  CHECK(call({"convert", "--no-such-flag", "1"}) == 2);
}

TEST_CASE("runtime failures exit with status 1") {
  TempDir tmp;
  set_log_level(LogLevel::quiet);
  CHECK(call({"--workdir", tmp.path.string(), "build-table", "--ckpt", "missing.ckpt", "--data", "x"}) == 1);
  CHECK(call({"--workdir", tmp.path.string(), "preprocess", "--in", "nowhere", "--out", "data"}) == 1);
}

TEST_CASE("artifacts are stamped with the resolved config") {
  TempDir tmp;
  set_log_level(LogLevel::quiet);
  REQUIRE(call({"--workdir", tmp.path.string(), "synth-corpus", "--out", "raw", "--singers", "3", "--clips", "1",
                "--seconds", "2.5"}) == 0);
  REQUIRE(call({"--workdir", tmp.path.string(), "preprocess", "--in", "raw", "--out", "data"},
               env_of({{"SVCLAB_THRESHOLD_DB", "-40"}})) == 0);
  const json stamp = json::parse(read_text_file(tmp.path / "data" / "run.json"));
  CHECK(stamp["command"] == "preprocess");
  CHECK(stamp["config"]["threshold-db"] == doctest::Approx(-40.0));
  CHECK(stamp["config_hash"] == config_hash("preprocess", stamp["config"]));
  CHECK(fs::exists(tmp.path / "data" / "splits.json"));
  CHECK(fs::exists(tmp.path / "raw" / "run.json"));

  write_text_file(tmp.path / "cfg.json", R"({"pitch-catalog": {"fmax": 900.0}})");
  REQUIRE(call({"--workdir", tmp.path.string(), "--config", "cfg.json", "pitch-catalog", "--data", "data"}) == 0);
  const json pc = json::parse(read_text_file(tmp.path / "pitch_catalog.csv.run.json"));
  CHECK(pc["config"]["fmax"] == doctest::Approx(900.0));
}

TEST_CASE("a study created from a pool elsewhere gets its own audio") {
  TempDir tmp;
  set_log_level(LogLevel::quiet);
  const fs::path pool = tmp.path / "pool";
  fs::create_directories(pool);
  dsp::Waveform w;
  w.samples = VectorXf::Constant(160, 0.1f);
  study::StudyConfig cfg;
  cfg.study_id = "s";
  cfg.variants = {"recon"};
  cfg.conversions = 4;
  cfg.references = 2;
  for (const auto& cell : eval::all_cells(cfg.variants)) {
    study::PoolClip c;
    c.clip_id = std::string(eval::to_string(cell.condition));
    c.variant = cell.variant;
    c.condition = c.clip_id;
    c.audio = c.clip_id + ".wav";
    c.target_reference = c.clip_id + "_target.wav";
    dsp::write_wav(pool / c.audio, w);
    dsp::write_wav(pool / c.target_reference, w);
    cfg.pool.push_back(c);
  }
  for (int k = 0; k < 2; ++k) {
    study::PoolClip c;
    c.clip_id = "ref" + std::to_string(k);
    c.variant = std::string(eval::kReferenceVariant);
    c.condition = std::string(eval::kNoCondition);
    c.audio = c.clip_id + ".wav";
    dsp::write_wav(pool / c.audio, w);
    cfg.pool.push_back(c);
  }
  write_text_file(pool / "study-config.json", cfg.to_json().dump());

  create_study_from_pool(tmp.path / "study", pool / "study-config.json");
  CHECK(fs::exists(tmp.path / "study" / "M-F.wav"));
  CHECK(fs::exists(tmp.path / "study" / "M-F_target.wav"));
  CHECK(fs::exists(tmp.path / "study" / "ref1.wav"));
  const auto st = study::Study::open(tmp.path / "study");
  CHECK(st->assign("x").clips.size() == 6);

  // Creating in place leaves the pool untouched.
  create_study_from_pool(pool, pool / "study-config.json");
  CHECK(study::Study::exists(pool));
}
