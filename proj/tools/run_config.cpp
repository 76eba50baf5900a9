#include "run_config.hpp"

#include <algorithm>
#include <cctype>

namespace svclab::cli {

std::string env_name(const std::string& option) {
  std::string out = "SVCLAB_";
  for (char c : option) out += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

json typed_value(const OptSpec& spec, const std::string& raw) {
  const auto bad = [&](const char* what) {
    return Error(Errc::config, "option --" + spec.name + " expects " + what + ", got '" + raw + "'");
  };
  try {
    std::size_t used = 0;
    if (spec.def.is_number_integer()) {
      const long long v = std::stoll(raw, &used);
      if (used != raw.size()) throw bad("an integer");
      return v;
    }
    if (spec.def.is_number_float()) {
      const double v = std::stod(raw, &used);
      if (used != raw.size()) throw bad("a number");
      return v;
    }
  } catch (const std::logic_error&) {
    throw bad(spec.def.is_number_integer() ? "an integer" : "a number");
  }
  if (spec.def.is_boolean()) {
    std::string s = raw;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
    if (s == "0" || s == "false" || s == "no" || s == "off") return false;
    throw bad("a boolean");
  }
  if (spec.def.is_object()) {
    try {
      json j = json::parse(raw);
      if (!j.is_object()) throw bad("a JSON object");
      return j;
    } catch (const json::exception&) {
      throw bad("a JSON object");
    }
  }
  return raw;
}

namespace {

json coerce(const OptSpec& spec, const json& v, const std::string& origin) {
  if (spec.def.is_null()) return v.is_string() ? v : json(v.dump());
  if (v.is_string() && !spec.def.is_string()) return typed_value(spec, v.get<std::string>());
  const bool ok = (spec.def.is_number() && v.is_number()) || (spec.def.is_boolean() && v.is_boolean()) ||
                  (spec.def.is_string() && v.is_string()) || (spec.def.is_object() && v.is_object());
  if (!ok) throw Error(Errc::config, origin + ": option '" + spec.name + "' has the wrong type");
  if (spec.def.is_number_integer() && !v.is_number_integer())
    throw Error(Errc::config, origin + ": option '" + spec.name + "' must be an integer");
  return spec.def.is_number_float() ? json(v.get<double>()) : v;
}

}  // namespace

json resolve_config(const CommandSpec& cmd, const json& file_config, const std::map<std::string, std::string>& flags,
                    const EnvLookup& env) {
  json out = json::object();
  const json* section = nullptr;
  if (file_config.is_object() && file_config.contains(cmd.name)) {
    section = &file_config.at(cmd.name);
    if (!section->is_object()) throw Error(Errc::config, "config section '" + cmd.name + "' must be an object");
    for (const auto& [k, v] : section->items()) {
      const bool known = std::any_of(cmd.options.begin(), cmd.options.end(), [&](const OptSpec& o) { return o.name == k; });
      if (!known) throw Error(Errc::config, "config section '" + cmd.name + "' has unknown option '" + k + "'");
    }
  }
  std::string missing;
  for (const auto& spec : cmd.options) {
    json v = spec.def;
    if (file_config.is_object() && file_config.contains(spec.name))
      v = coerce(spec, file_config.at(spec.name), "config file");
    if (section && section->contains(spec.name)) v = coerce(spec, section->at(spec.name), "config file");
    if (env)
      if (auto e = env(env_name(spec.name))) v = spec.def.is_null() ? json(*e) : typed_value(spec, *e);
    if (auto it = flags.find(spec.name); it != flags.end())
      v = spec.def.is_null() ? json(it->second) : typed_value(spec, it->second);
    if (v.is_null() || (spec.def.is_null() && v.get<std::string>().empty()))
      missing += (missing.empty() ? "--" : ", --") + spec.name;
    out[spec.name] = v;
  }
  if (!missing.empty()) throw Error(Errc::config, cmd.name + ": missing required option " + missing);
  return out;
}

std::string config_hash(const std::string& command, const json& resolved) {
  return hex64(fnv1a(json{{"command", command}, {"config", resolved}}.dump()));
}

RunContext::RunContext(std::string command, json resolved, fs::path workdir)
    : command_(std::move(command)), config_(std::move(resolved)), workdir_(std::move(workdir)) {
  hash_ = config_hash(command_, config_);
}

bool RunContext::has(const std::string& key) const {
  if (!config_.contains(key)) return false;
  const json& v = config_.at(key);
  return !v.is_null() && !(v.is_string() && v.get<std::string>().empty());
}

fs::path RunContext::resolve(const fs::path& p) const { return p.is_absolute() ? p : workdir_ / p; }

fs::path RunContext::path(const std::string& key) const { return resolve(get<std::string>(key)); }

json RunContext::stamp_json() const {
  return {{"tool", "svc-lab"}, {"command", command_}, {"config", config_}, {"config_hash", hash_}};
}

void RunContext::stamp(const fs::path& artifact, const json& extra) const {
  json j = stamp_json();
  for (const auto& [k, v] : extra.items()) j[k] = v;
  const fs::path target =
      fs::is_directory(artifact) ? artifact / "run.json" : fs::path(artifact.string() + ".run.json");
  write_text_file(target, j.dump(2) + "\n");
}

}  // namespace svclab::cli
