#pragma once

// Plain-text configuration: `key = value` lines, `#` comments, optional
// `[section]` headers. Keys before the first header belong to section "".

#include <map>
#include <set>
#include <string>
#include <vector>

namespace flatcmc {

using KeyValueBlock = std::map<std::string, std::string>;

/// Parses a block without sections; throws ConfigError on malformed lines or
/// duplicate keys.
KeyValueBlock parse_key_value(const std::string& text);

struct ConfigFile {
  std::map<std::string, KeyValueBlock> sections;
};

ConfigFile parse_config(const std::string& text);

/// Typed view of one scenario's parameters. Lookups record which keys were
/// read so unknown keys can be reported.
class ScenarioConfig {
 public:
  ScenarioConfig() = default;
  ScenarioConfig(std::string name, KeyValueBlock values);

  /// Selects the scenario: `override_name` if non-empty, else the top-level
  /// `scenario` key. Keys from [scenario-name] override top-level ones.
  static ScenarioConfig from_file(const ConfigFile& file, const std::string& override_name);

  const std::string& name() const { return name_; }
  bool has(const std::string& key) const { return values_.contains(key); }

  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  /// Whitespace- or comma-separated list of numbers.
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;

  /// Keys present in the config that no getter has asked for.
  std::vector<std::string> unused_keys() const;

 private:
  const std::string* lookup(const std::string& key) const;

  std::string name_;
  KeyValueBlock values_;
  mutable std::set<std::string> used_;
};

}  // namespace flatcmc
