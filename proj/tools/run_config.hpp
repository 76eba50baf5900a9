#pragma once

// Option tables and config resolution for the svc-lab commands.
// Precedence, lowest first: built-in default, config file, SVCLAB_* environment, flag.

#include "svclab/io.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace svclab::cli {

struct OptSpec {
  std::string name;  // flag name without dashes, also the config key
  json def;          // null: required
  std::string help;
  bool path = false;  // resolved against the workdir
};

class RunContext;

struct CommandSpec {
  std::string name;
  std::string help;
  std::vector<OptSpec> options;
  std::function<int(RunContext&)> run;
};

/// Environment variable for an option: SVCLAB_ + upper-case name, '-' -> '_'.
std::string env_name(const std::string& option);

/// Parses a raw string into the JSON type of the option's default.
json typed_value(const OptSpec& spec, const std::string& raw);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Resolved option values for one command. Keys named in `flags` win; the
/// config file contributes top-level keys and the `command` section.
/// Errc::config names a required option left unset.
json resolve_config(const CommandSpec& cmd, const json& file_config, const std::map<std::string, std::string>& flags,
                    const EnvLookup& env);

std::string config_hash(const std::string& command, const json& resolved);

class RunContext {
 public:
  RunContext(std::string command, json resolved, fs::path workdir);

  const std::string& command() const { return command_; }
  const json& config() const { return config_; }
  const std::string& hash() const { return hash_; }
  const fs::path& workdir() const { return workdir_; }

  template <typename T>
  T get(const std::string& key) const {
    return config_.at(key).get<T>();
  }
  bool has(const std::string& key) const;  // present and not an empty string
  fs::path path(const std::string& key) const;
  fs::path resolve(const fs::path& p) const;

  /// Stamp written next to an artifact: <artifact>.run.json, or run.json inside a directory.
  void stamp(const fs::path& artifact, const json& extra = json::object()) const;
  json stamp_json() const;

 private:
  std::string command_;
  json config_;
  fs::path workdir_;
  std::string hash_;
};

}  // namespace svclab::cli
