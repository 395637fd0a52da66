#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

namespace polyroom::cli {

// One flat config key. The default's JSON type fixes how the flag and the
// file value are parsed; a null default marks the key as required.
struct OptionSpec {
  std::string key;
  nlohmann::json fallback;
  std::string help;
};

// defaults <- --config file <- flags, resolved before a subcommand runs.
class RunConfig {
 public:
  explicit RunConfig(std::vector<OptionSpec> specs) : specs_(std::move(specs)) {}

  void bind(CLI::App& app);
  void resolve();

  const nlohmann::json& resolved() const { return resolved_; }
  bool has(const std::string& key) const;
  bool given(const std::string& key) const;  // set by file or flag
  std::string str(const std::string& key) const;
  double num(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  std::uint64_t seed(const std::string& key) const;
  bool flag(const std::string& key) const;

  void echo(const std::filesystem::path& dir, const std::string& name = "run_config.json") const;

 private:
  const nlohmann::json& at(const std::string& key) const;

  std::vector<OptionSpec> specs_;
  std::map<std::string, std::string> raw_;  // flag text by key
  std::map<std::string, CLI::Option*> options_;
  std::string config_path_;
  nlohmann::json resolved_;
  std::map<std::string, bool> given_;
};

std::string flag_name(const std::string& key);

}  // namespace polyroom::cli
