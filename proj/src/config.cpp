#include "flatcmc/config.hpp"

#include "flatcmc/errors.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace flatcmc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last || !std::isfinite(v)) {
    throw ConfigError("key '" + key + "': expected a number, got '" + text + "'");
  }
  return v;
}

}  // namespace

ConfigFile parse_config(const std::string& text) {
  ConfigFile out;
  std::string section;
  out.sections[section];
  std::istringstream is(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) throw ConfigError("line " + std::to_string(line_no) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      out.sections[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    auto& block = out.sections[section];
    if (!block.emplace(key, value).second) {
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
  }
  return out;
}

KeyValueBlock parse_key_value(const std::string& text) {
  ConfigFile f = parse_config(text);
  if (f.sections.size() != 1) throw ConfigError("sections are not allowed here");
  return f.sections[""];
}

ScenarioConfig::ScenarioConfig(std::string name, KeyValueBlock values)
    : name_(std::move(name)), values_(std::move(values)) {}

ScenarioConfig ScenarioConfig::from_file(const ConfigFile& file, const std::string& override_name) {
  KeyValueBlock merged;
  if (auto it = file.sections.find(""); it != file.sections.end()) merged = it->second;
  std::string name = override_name;
  if (name.empty()) {
    auto it = merged.find("scenario");
    if (it == merged.end()) throw ConfigError("no scenario selected (set `scenario = ...` or pass --scenario)");
    name = it->second;
  }
  merged.erase("scenario");
  if (auto it = file.sections.find(name); it != file.sections.end()) {
    for (const auto& [k, v] : it->second) merged[k] = v;
  }
  return ScenarioConfig(name, merged);
}

const std::string* ScenarioConfig::lookup(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  used_.insert(key);
  return &it->second;
}

double ScenarioConfig::get_double(const std::string& key, double fallback) const {
  const std::string* v = lookup(key);
  return v ? parse_number(key, *v) : fallback;
}

int ScenarioConfig::get_int(const std::string& key, int fallback) const {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  const double d = parse_number(key, *v);
  if (d != std::floor(d) || std::abs(d) > 1e9) throw ConfigError("key '" + key + "': expected an integer");
  return static_cast<int>(d);
}

bool ScenarioConfig::get_bool(const std::string& key, bool fallback) const {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw ConfigError("key '" + key + "': expected true/false");
}

std::string ScenarioConfig::get_string(const std::string& key, const std::string& fallback) const {
  const std::string* v = lookup(key);
  return v ? *v : fallback;
}

std::vector<double> ScenarioConfig::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  std::string text = *v;
  for (char& c : text) {
    if (c == ',') c = ' ';
  }
  std::istringstream is(text);
  std::vector<double> out;
  std::string tok;
  while (is >> tok) out.push_back(parse_number(key, tok));
  if (out.empty()) throw ConfigError("key '" + key + "': empty list");
  return out;
}

std::vector<std::string> ScenarioConfig::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) {
    if (!used_.contains(k)) out.push_back(k);
  }
  return out;
}

}  // namespace flatcmc
