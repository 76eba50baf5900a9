#include "svclab/studysvc.hpp"

#include "svclab/io.hpp"
#include "svclab/log.hpp"

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace svclab::study {

namespace {

constexpr const char* kConfigFile = "study.json";
constexpr const char* kEventLog = "events.log";

std::string now_iso() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::uint64_t next_seed(std::uint64_t s) {
  // splitmix64 step
  s += 0x9e3779b97f4a7c15ULL;
  s = (s ^ (s >> 30)) * 0xbf58476d1ce4e5b9ULL;
  s = (s ^ (s >> 27)) * 0x94d049bb133111ebULL;
  return s ^ (s >> 31);
}

}  // namespace

// ---- config -----------------------------------------------------------------

json StudyConfig::to_json() const {
  json pool_json = json::array();
  for (const auto& c : pool)
    pool_json.push_back({{"clip_id", c.clip_id},
                         {"variant", c.variant},
                         {"condition", c.condition},
                         {"audio", c.audio},
                         {"target_reference", c.target_reference},
                         {"meta", c.meta}});
  return {{"study_id", study_id},           {"variants", variants},     {"pool", pool_json},
          {"listeners_expected", listeners_expected}, {"conversions", conversions}, {"references", references},
          {"seed", seed}};
}

StudyConfig StudyConfig::from_json(const json& j) {
  StudyConfig c;
  c.study_id = j.at("study_id").get<std::string>();
  c.variants = j.at("variants").get<std::vector<std::string>>();
  c.listeners_expected = j.value("listeners_expected", 0);
  c.conversions = j.value("conversions", c.conversions);
  c.references = j.value("references", c.references);
  c.seed = j.value("seed", c.seed);
  for (const auto& p : j.at("pool")) {
    PoolClip clip;
    clip.clip_id = p.at("clip_id").get<std::string>();
    clip.variant = p.at("variant").get<std::string>();
    clip.condition = p.value("condition", std::string(eval::kNoCondition));
    clip.audio = p.at("audio").get<std::string>();
    clip.target_reference = p.value("target_reference", std::string{});
    clip.meta = p.value("meta", json::object());
    c.pool.push_back(std::move(clip));
  }
  return c;
}

void StudyConfig::validate() const {
  if (study_id.empty()) throw Error(Errc::config, "study_id is empty");
  if (variants.empty()) throw Error(Errc::config, "a study needs at least one model variant");
  std::set<std::string> ids;
  std::size_t refs = 0;
  std::set<std::pair<std::string, std::string>> present;
  for (const auto& c : pool) {
    if (!ids.insert(c.clip_id).second) throw Error(Errc::data, "duplicate clip id '" + c.clip_id + "' in the pool");
    if (c.variant == eval::kReferenceVariant)
      ++refs;
    else
      present.insert({c.variant, c.condition});
  }
  const auto cells = eval::all_cells(variants);
  std::string missing;
  for (const auto& cell : cells)
    if (!present.contains({cell.variant, std::string(to_string(cell.condition))}))
      missing += (missing.empty() ? "" : ", ") + cell.label();
  if (!missing.empty()) throw Error(Errc::data, "clip pool has no clip for cell " + missing);
  if (refs < references)
    throw Error(Errc::data, "clip pool has " + std::to_string(refs) + " reference clips, " +
                                std::to_string(references) + " needed");
  if (conversions < cells.size() || conversions > 2 * cells.size())
    throw Error(Errc::config, "conversions per listener must lie between the cell count and twice that");
}

// ---- study ------------------------------------------------------------------

Study::Study(fs::path dir, StudyConfig cfg) : dir_(std::move(dir)), cfg_(std::move(cfg)) {
  for (std::size_t i = 0; i < cfg_.pool.size(); ++i) clip_index_[cfg_.pool[i].clip_id] = i;
}

bool Study::exists(const fs::path& dir) { return fs::exists(dir / kConfigFile); }

std::unique_ptr<Study> Study::create(const fs::path& dir, const StudyConfig& cfg) {
  cfg.validate();
  if (exists(dir)) throw Error(Errc::conflict, "a study already exists in " + dir.string());
  for (const auto& c : cfg.pool) {
    if (!fs::exists(dir / c.audio)) throw Error(Errc::data, "audio for clip '" + c.clip_id + "' not found: " + c.audio);
    if (!c.target_reference.empty() && !fs::exists(dir / c.target_reference))
      throw Error(Errc::data, "reference audio for clip '" + c.clip_id + "' not found: " + c.target_reference);
  }
  fs::create_directories(dir);
  const fs::path tmp = dir / (std::string(kConfigFile) + ".tmp");
  write_text_file(tmp, cfg.to_json().dump(2));
  write_text_file(dir / kEventLog, "");
  fs::rename(tmp, dir / kConfigFile);
  log_info("created study " + cfg.study_id + " in " + dir.string());
  return std::unique_ptr<Study>(new Study(dir, cfg));
}

std::unique_ptr<Study> Study::open(const fs::path& dir) {
  if (!exists(dir)) throw Error(Errc::not_found, "no study in " + dir.string());
  json j;
  try {
    j = json::parse(read_text_file(dir / kConfigFile));
  } catch (const json::exception& e) {
    throw Error(Errc::format, (dir / kConfigFile).string() + ": " + e.what());
  }
  std::unique_ptr<Study> s(new Study(dir, StudyConfig::from_json(j)));
  s->replay();
  return s;
}

void Study::replay() {
  const fs::path path = dir_ / kEventLog;
  if (!fs::exists(path)) return;
  std::istringstream in(read_text_file(path));
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json e;
    try {
      e = json::parse(line);
    } catch (const json::exception&) {
      // A torn final write is dropped; anything earlier is corruption.
      if (in.peek() == std::char_traits<char>::eof()) {
        log_warn(path.string() + ":" + std::to_string(lineno) + ": ignoring incomplete trailing event");
        break;
      }
      throw Error(Errc::format, path.string() + ":" + std::to_string(lineno) + ": unreadable event");
    }
    const std::string type = e.at("type").get<std::string>();
    if (type == "assign") {
      Assignment a{e.at("listener").get<std::string>(), e.at("seed").get<std::uint64_t>(),
                   e.at("clips").get<std::vector<std::string>>()};
      assignments_[a.listener_id] = std::move(a);
    } else if (type == "rating") {
      ratings_[{e.at("listener").get<std::string>(), e.at("clip").get<std::string>(),
                eval::parse_rating_type(e.at("rating_type").get<std::string>())}] = e.at("rating").get<int>();
    }
    ++events_;
  }
}

void Study::append(const json& event) {
  std::ofstream os(dir_ / kEventLog, std::ios::app | std::ios::binary);
  if (!os) throw Error(Errc::ingestion, "cannot append to " + (dir_ / kEventLog).string());
  os << event.dump() << '\n';
  os.flush();
  if (!os) throw Error(Errc::ingestion, "write to " + (dir_ / kEventLog).string() + " failed");
  ++events_;
}

Assignment Study::draw(const std::string& listener_id, std::uint64_t seed) const {
  const auto cells = eval::all_cells(cfg_.variants);
  std::vector<std::vector<std::string>> by_cell(cells.size());
  std::vector<std::string> refs;
  for (const auto& c : cfg_.pool) {
    if (c.variant == eval::kReferenceVariant) {
      refs.push_back(c.clip_id);
      continue;
    }
    for (std::size_t k = 0; k < cells.size(); ++k)
      if (cells[k].variant == c.variant && to_string(cells[k].condition) == c.condition) by_cell[k].push_back(c.clip_id);
  }
  std::mt19937_64 rng(seed);
  Assignment a{listener_id, seed, {}};
  std::map<std::size_t, std::string> first;
  for (std::size_t slot : eval::listener_cell_slots(cells.size(), cfg_.conversions, rng)) {
    const auto& pool = by_cell[slot];
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::string chosen = pool[pick(rng)];
    if (auto it = first.find(slot); it != first.end() && pool.size() > 1)
      while (chosen == it->second) chosen = pool[pick(rng)];
    first.emplace(slot, chosen);
    a.clips.push_back(chosen);
  }
  std::shuffle(refs.begin(), refs.end(), rng);
  a.clips.insert(a.clips.end(), refs.begin(), refs.begin() + static_cast<std::ptrdiff_t>(cfg_.references));
  std::shuffle(a.clips.begin(), a.clips.end(), rng);
  return a;
}

Assignment Study::assign(const std::string& listener_id, std::optional<std::uint64_t> seed) {
  if (listener_id.empty()) throw Error(Errc::rejected, "listener id is empty");
  std::unique_lock lock(mu_);
  if (auto it = assignments_.find(listener_id); it != assignments_.end()) return it->second;
  std::uint64_t s = seed.value_or(fnv1a(listener_id) ^ cfg_.seed);
  Assignment a = draw(listener_id, s);
  for (int attempt = 0; attempt < 100; ++attempt) {
    const bool taken = std::any_of(assignments_.begin(), assignments_.end(),
                                   [&](const auto& kv) { return kv.second.clips == a.clips; });
    if (!taken) break;
    s = next_seed(s);
    a = draw(listener_id, s);
  }
  append({{"type", "assign"}, {"listener", listener_id}, {"seed", s}, {"clips", a.clips}, {"time", now_iso()}});
  assignments_[listener_id] = a;
  return a;
}

std::optional<Assignment> Study::find_assignment(const std::string& listener_id) const {
  std::shared_lock lock(mu_);
  if (auto it = assignments_.find(listener_id); it != assignments_.end()) return it->second;
  return std::nullopt;
}

std::vector<eval::RatingType> Study::rated(const std::string& listener_id, const std::string& clip_id) const {
  std::shared_lock lock(mu_);
  std::vector<eval::RatingType> out;
  for (auto t : {eval::RatingType::naturalness, eval::RatingType::similarity})
    if (ratings_.contains({listener_id, clip_id, t})) out.push_back(t);
  return out;
}

SubmitResult Study::submit(const RatingSubmission& r) {
  if (r.rating < 1 || r.rating > 5)
    throw Error(Errc::rejected, "rating " + std::to_string(r.rating) + " is outside 1..5");
  std::unique_lock lock(mu_);
  auto it = assignments_.find(r.listener_id);
  if (it == assignments_.end()) throw Error(Errc::not_found, "listener '" + r.listener_id + "' has no assignment");
  const auto& clips = it->second.clips;
  if (std::find(clips.begin(), clips.end(), r.clip_id) == clips.end())
    throw Error(Errc::rejected, "clip '" + r.clip_id + "' is not assigned to listener '" + r.listener_id + "'");
  const RatingKey key{r.listener_id, r.clip_id, r.type};
  SubmitResult res;
  json event{{"type", "rating"},         {"listener", r.listener_id}, {"clip", r.clip_id},
             {"rating_type", std::string(eval::to_string(r.type))}, {"rating", r.rating}, {"time", now_iso()}};
  if (auto old = ratings_.find(key); old != ratings_.end()) {
    res.superseded = true;
    res.previous = old->second;
    event["supersedes"] = old->second;
  }
  append(event);
  ratings_[key] = r.rating;
  if (res.superseded)
    log_info("rating by " + r.listener_id + " for " + r.clip_id + " (" + std::string(eval::to_string(r.type)) +
             ") superseded: " + std::to_string(res.previous) + " -> " + std::to_string(r.rating));
  return res;
}

std::vector<eval::RatingRecord> Study::export_ratings() const {
  std::shared_lock lock(mu_);
  std::vector<eval::RatingRecord> out;
  for (const auto& [key, value] : ratings_) {
    const auto& [listener, clip_id, type] = key;
    const PoolClip& c = cfg_.pool.at(clip_index_.at(clip_id));
    out.push_back({listener, clip_id, c.variant, c.condition, type, value});
  }
  return out;
}

std::string Study::export_csv() const {
  const auto rows = export_ratings();
  if (rows.empty()) log_warn("study " + cfg_.study_id + " has no ratings; the export is empty");
  return eval::ratings_csv(rows);
}

const PoolClip& Study::clip(const std::string& clip_id) const {
  auto it = clip_index_.find(clip_id);
  if (it == clip_index_.end()) throw Error(Errc::not_found, "unknown clip '" + clip_id + "'");
  return cfg_.pool[it->second];
}

fs::path Study::audio_path(const std::string& clip_id) const { return dir_ / clip(clip_id).audio; }

std::size_t Study::listener_count() const {
  std::shared_lock lock(mu_);
  return assignments_.size();
}

std::size_t Study::event_count() const {
  std::shared_lock lock(mu_);
  return events_;
}

// ---- HTTP -------------------------------------------------------------------

struct StudyServer::Impl {
  fs::path dir;
  httplib::Server server;
  std::shared_mutex mu;
  std::unique_ptr<Study> study;
  int socket_port = -1;

  Study* current() {
    std::shared_lock lock(mu);
    return study.get();
  }
};

namespace {

int status_for(Errc code) {
  switch (code) {
    case Errc::conflict: return 409;
    case Errc::not_found: return 404;
    case Errc::rejected: return 422;
    default: return 400;
  }
}

void reply_error(httplib::Response& res, int status, const std::string& msg) {
  res.status = status;
  res.set_content(json{{"error", msg}}.dump(), "application/json");
}

void reply_json(httplib::Response& res, const json& j, int status = 200) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

}  // namespace

StudyServer::StudyServer(fs::path dir) : impl_(std::make_unique<Impl>()) {
  impl_->dir = std::move(dir);
  if (Study::exists(impl_->dir)) impl_->study = Study::open(impl_->dir);
  auto& srv = impl_->server;
  Impl* self = impl_.get();
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"}});

  // Every handler turns library errors into a JSON error body.
  auto guarded = [self](auto&& body) {
    return [self, body](const httplib::Request& req, httplib::Response& res) {
      try {
        body(*self, req, res);
      } catch (const Error& e) {
        reply_error(res, status_for(e.code()), e.what());
      } catch (const json::exception& e) {
        reply_error(res, 400, std::string("malformed request: ") + e.what());
      }
    };
  };
  auto need_study = [](Impl& s) -> Study& {
    Study* st = s.current();
    if (!st) throw Error(Errc::not_found, "no study has been created");
    return *st;
  };

  srv.Post("/api/study", guarded([](Impl& s, const httplib::Request& req, httplib::Response& res) {
             const StudyConfig cfg = StudyConfig::from_json(json::parse(req.body));
             std::unique_lock lock(s.mu);
             if (s.study) throw Error(Errc::conflict, "study '" + s.study->config().study_id + "' already exists");
             s.study = Study::create(s.dir, cfg);
             reply_json(res, {{"study_id", cfg.study_id}, {"pool", cfg.pool.size()}}, 201);
           }));

  srv.Get("/api/assignment", guarded([need_study](Impl& s, const httplib::Request& req, httplib::Response& res) {
            Study& st = need_study(s);
            if (!req.has_param("listener")) throw Error(Errc::rejected, "missing listener parameter");
            std::optional<std::uint64_t> seed;
            if (req.has_param("seed")) seed = std::stoull(req.get_param_value("seed"));
            const Assignment a = st.assign(req.get_param_value("listener"), seed);
            json trials = json::array();
            for (std::size_t i = 0; i < a.clips.size(); ++i) {
              const PoolClip& c = st.clip(a.clips[i]);
              json rated = json::array();
              for (auto t : st.rated(a.listener_id, c.clip_id)) rated.push_back(std::string(eval::to_string(t)));
              trials.push_back({{"index", i},
                                {"clip_id", c.clip_id},
                                {"audio_url", "/api/clips/" + c.clip_id + "/audio"},
                                {"reference_url", c.target_reference.empty()
                                                      ? json(nullptr)
                                                      : json("/api/clips/" + c.clip_id + "/reference")},
                                {"rated", rated}});
            }
            reply_json(res, {{"study_id", st.config().study_id},
                             {"listener", a.listener_id},
                             {"total", a.clips.size()},
                             {"scale", {1, 5}},
                             {"trials", trials}});
          }));

  auto serve_file = [](httplib::Response& res, const fs::path& p) {
    if (!fs::exists(p)) throw Error(Errc::not_found, "audio file missing: " + p.filename().string());
    const std::string bytes = read_text_file(p);
    res.set_content(bytes, "audio/wav");
  };
  srv.Get(R"(/api/clips/([^/]+)/audio)",
          guarded([need_study, serve_file](Impl& s, const httplib::Request& req, httplib::Response& res) {
            serve_file(res, need_study(s).audio_path(req.matches[1]));
          }));
  srv.Get(R"(/api/clips/([^/]+)/reference)",
          guarded([need_study, serve_file](Impl& s, const httplib::Request& req, httplib::Response& res) {
            Study& st = need_study(s);
            const PoolClip& c = st.clip(req.matches[1]);
            if (c.target_reference.empty()) throw Error(Errc::not_found, "clip has no target reference");
            serve_file(res, st.directory() / c.target_reference);
          }));

  srv.Post("/api/ratings", guarded([need_study](Impl& s, const httplib::Request& req, httplib::Response& res) {
             Study& st = need_study(s);
             const json j = json::parse(req.body);
             RatingSubmission r{j.at("listener").get<std::string>(), j.at("clip_id").get<std::string>(),
                                eval::parse_rating_type(j.at("rating_type").get<std::string>()),
                                j.at("rating").get<int>()};
             const SubmitResult out = st.submit(r);
             json body{{"stored", true}, {"superseded", out.superseded}};
             if (out.superseded) body["previous"] = out.previous;
             reply_json(res, body);
           }));

  srv.Get("/api/export", guarded([need_study](Impl& s, const httplib::Request&, httplib::Response& res) {
            res.set_content(need_study(s).export_csv(), "text/csv");
          }));
}

StudyServer::~StudyServer() { stop(); }

int StudyServer::bind_any_port(const std::string& host) {
  impl_->socket_port = impl_->server.bind_to_any_port(host);
  if (impl_->socket_port < 0) throw Error(Errc::config, "cannot bind to " + host);
  return impl_->socket_port;
}

bool StudyServer::bind(const std::string& host, int port) {
  if (!impl_->server.bind_to_port(host, port)) return false;
  impl_->socket_port = port;
  return true;
}

void StudyServer::run() { impl_->server.listen_after_bind(); }

void StudyServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace svclab::study
