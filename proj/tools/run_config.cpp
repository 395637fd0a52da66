#include "run_config.hpp"

#include <fstream>

#include "polyroom/error.hpp"

namespace polyroom::cli {

using nlohmann::json;

namespace {

json parse_like(const std::string& key, const std::string& text, const json& like) {
  try {
    if (like.is_boolean()) {
      if (text == "true" || text == "1") return true;
      if (text == "false" || text == "0") return false;
      throw std::invalid_argument("not a boolean");
    }
    if (like.is_number_unsigned()) {
      if (!text.empty() && text[0] == '-') throw std::invalid_argument("negative");
      std::size_t used = 0;
      const unsigned long long v = std::stoull(text, &used);
      if (used != text.size()) throw std::invalid_argument("trailing characters");
      return v;
    }
    if (like.is_number()) {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument("trailing characters");
      return v;
    }
  } catch (const std::exception&) {
    throw Error(ErrorKind::kConfig, "bad value '" + text + "' for " + key);
  }
  return text;
}

bool same_kind(const json& value, const json& like) {
  if (like.is_null()) return value.is_string();
  if (like.is_boolean()) return value.is_boolean();
  if (like.is_number_unsigned()) return value.is_number_unsigned();
  if (like.is_number()) return value.is_number();
  return value.type() == like.type();
}

}  // namespace

std::string flag_name(const std::string& key) {
  std::string out = "--";
  for (char c : key) out += c == '_' ? '-' : c;
  return out;
}

void RunConfig::bind(CLI::App& app) {
  app.add_option("--config", config_path_, "flat JSON config; flags take precedence");
  for (const OptionSpec& s : specs_) {
    if (s.fallback.is_boolean()) {
      // --name sets true; --name=false is accepted too.
      options_[s.key] = app.add_flag_callback(flag_name(s.key), [this, key = s.key]() { raw_[key] = "true"; }, s.help);
      app.add_flag_callback("--no-" + flag_name(s.key).substr(2), [this, key = s.key]() { raw_[key] = "false"; });
    } else {
      options_[s.key] = app.add_option(flag_name(s.key), raw_[s.key], s.help);
    }
  }
}

void RunConfig::resolve() {
  resolved_ = json::object();
  for (const OptionSpec& s : specs_) resolved_[s.key] = s.fallback;
  if (!config_path_.empty()) {
    std::ifstream in(config_path_);
    if (!in) throw Error(ErrorKind::kConfig, "cannot read config " + config_path_);
    json file;
    try {
      file = json::parse(in);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kConfig, "config " + config_path_ + ": " + e.what());
    }
    if (!file.is_object()) throw Error(ErrorKind::kConfig, "config must be a flat JSON object");
    for (auto it = file.begin(); it != file.end(); ++it) {
      const auto spec = std::find_if(specs_.begin(), specs_.end(), [&](const OptionSpec& s) { return s.key == it.key(); });
      if (spec == specs_.end()) throw Error(ErrorKind::kConfig, "unknown config key '" + it.key() + "'");
      json value = it.value();
      if (spec->fallback.is_number_float() && value.is_number()) value = value.get<double>();
      if (!same_kind(value, spec->fallback)) throw Error(ErrorKind::kConfig, "wrong type for config key '" + it.key() + "'");
      resolved_[it.key()] = value;
      given_[it.key()] = true;
    }
  }
  for (const OptionSpec& s : specs_) {
    const auto raw = raw_.find(s.key);
    const bool set = s.fallback.is_boolean() ? raw != raw_.end() : options_.at(s.key)->count() > 0;
    if (!set) continue;
    resolved_[s.key] = parse_like(s.key, raw->second, s.fallback);
    given_[s.key] = true;
  }
}

const json& RunConfig::at(const std::string& key) const {
  const auto it = resolved_.find(key);
  if (it == resolved_.end()) throw Error(ErrorKind::kContract, "unregistered config key " + key);
  if (it->is_null()) throw Error(ErrorKind::kConfig, "missing required option " + flag_name(key));
  return *it;
}

bool RunConfig::has(const std::string& key) const {
  const auto it = resolved_.find(key);
  return it != resolved_.end() && !it->is_null();
}

bool RunConfig::given(const std::string& key) const { return given_.count(key) != 0; }
std::string RunConfig::str(const std::string& key) const { return at(key).get<std::string>(); }
double RunConfig::num(const std::string& key) const { return at(key).get<double>(); }
std::size_t RunConfig::count(const std::string& key) const { return at(key).get<std::size_t>(); }
std::uint64_t RunConfig::seed(const std::string& key) const { return at(key).get<std::uint64_t>(); }
bool RunConfig::flag(const std::string& key) const { return at(key).get<bool>(); }

void RunConfig::echo(const std::filesystem::path& dir, const std::string& name) const {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / name, std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + (dir / name).string());
  out << resolved_.dump(2) << '\n';
}

}  // namespace polyroom::cli
