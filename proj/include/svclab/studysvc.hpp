#pragma once

// Listening-study backend. A study lives in one directory:
//   study.json   configuration and clip pool, written once
//   events.log   append-only JSON lines (assignments and ratings)
//   audio files  referenced from the pool, relative to the directory
// The in-memory state is rebuilt by replaying the log.

#include "svclab/evalkit.hpp"

#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace svclab::study {

struct PoolClip {
  std::string clip_id;
  std::string variant;    // eval::kReferenceVariant for resynthesized genuine clips
  std::string condition;  // eval::kNoCondition for references
  std::string audio;      // relative to the study directory
  std::string target_reference;  // audio of the target singer, shown with similarity trials
  json meta = json::object();
};

struct StudyConfig {
  std::string study_id;
  std::vector<std::string> variants;
  std::vector<PoolClip> pool;
  int listeners_expected = 0;
  std::size_t conversions = 16;
  std::size_t references = 4;
  std::uint64_t seed = 0;

  json to_json() const;
  static StudyConfig from_json(const json& j);
  /// Errc::data naming every cell without a clip, or too few references.
  void validate() const;
};

struct Assignment {
  std::string listener_id;
  std::uint64_t seed = 0;
  std::vector<std::string> clips;  // presentation order
};

struct RatingSubmission {
  std::string listener_id;
  std::string clip_id;
  eval::RatingType type = eval::RatingType::naturalness;
  int rating = 0;
};

struct SubmitResult {
  bool superseded = false;
  int previous = 0;
};

class Study {
 public:
  /// Creates the study directory contents; Errc::conflict if a study already exists there.
  static std::unique_ptr<Study> create(const fs::path& dir, const StudyConfig& cfg);
  static std::unique_ptr<Study> open(const fs::path& dir);
  static bool exists(const fs::path& dir);

  const StudyConfig& config() const { return cfg_; }
  const fs::path& directory() const { return dir_; }

  /// Stored assignment, or a new one drawn with `seed` (default: derived from
  /// the study seed and listener id). Idempotent per listener.
  Assignment assign(const std::string& listener_id, std::optional<std::uint64_t> seed = std::nullopt);
  std::optional<Assignment> find_assignment(const std::string& listener_id) const;

  /// Rating types already stored for (listener, clip).
  std::vector<eval::RatingType> rated(const std::string& listener_id, const std::string& clip_id) const;

  /// Errc::rejected for out-of-range ratings or clips outside the listener's
  /// assignment; Errc::not_found for unknown listeners.
  SubmitResult submit(const RatingSubmission& r);

  /// Current ratings joined with clip metadata, ordered by listener, clip, type.
  std::vector<eval::RatingRecord> export_ratings() const;
  std::string export_csv() const;

  const PoolClip& clip(const std::string& clip_id) const;
  fs::path audio_path(const std::string& clip_id) const;
  std::size_t listener_count() const;
  std::size_t event_count() const;

 private:
  Study(fs::path dir, StudyConfig cfg);
  void replay();
  void append(const json& event);
  Assignment draw(const std::string& listener_id, std::uint64_t seed) const;

  using RatingKey = std::tuple<std::string, std::string, eval::RatingType>;

  fs::path dir_;
  StudyConfig cfg_;
  std::map<std::string, std::size_t> clip_index_;
  mutable std::shared_mutex mu_;
  std::map<std::string, Assignment> assignments_;
  std::map<RatingKey, int> ratings_;
  std::size_t events_ = 0;
};

/// HTTP front end for one study directory.
///   POST /api/study                      create (409 if one exists)
///   GET  /api/assignment?listener=ID     assignment (created on first request)
///   GET  /api/clips/{id}/audio           clip audio (WAV)
///   GET  /api/clips/{id}/reference       target-singer reference audio
///   POST /api/ratings                    {listener, clip_id, rating_type, rating}
///   GET  /api/export                     ratings CSV
class StudyServer {
 public:
  explicit StudyServer(fs::path dir);
  ~StudyServer();

  /// Binds to a free port on `host` and returns it; serve with run().
  int bind_any_port(const std::string& host = "127.0.0.1");
  bool bind(const std::string& host, int port);
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace svclab::study
