#include "gece/config.hpp"

#include <cctype>
#include <filesystem>
#include <fstream>

namespace gece {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
  }
  return true;
}

}  // namespace

ConfigFile ConfigFile::parse(std::istream& in, const std::string& source) {
  ConfigFile cfg;
  cfg.source_ = source;
  std::string section;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw ConfigError(source + ":" + std::to_string(line_no) + ": " + msg);
  };

  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (t.front() == '[') {
      const auto close = t.find(']');
      if (close == std::string::npos) fail("unterminated section header");
      const std::string rest = trim(t.substr(close + 1));
      if (!rest.empty() && rest.front() != '#') fail("trailing text after section header");
      section = trim(t.substr(1, close - 1));
      if (!valid_key(section)) fail("invalid section name '" + section + "'");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) fail("expected 'key = value'");
    const std::string key = trim(t.substr(0, eq));
    if (!valid_key(key)) fail("invalid key '" + key + "'");
    std::string raw = trim(t.substr(eq + 1));
    if (raw.empty()) fail("missing value for '" + key + "'");

    Value value;
    if (raw.front() == '"') {
      std::string s;
      std::size_t i = 1;
      bool closed = false;
      for (; i < raw.size(); ++i) {
        char c = raw[i];
        if (c == '\\' && i + 1 < raw.size()) {
          char n = raw[++i];
          switch (n) {
            case 'n':
              s.push_back('\n');
              break;
            case 't':
              s.push_back('\t');
              break;
            case '"':
            case '\\':
              s.push_back(n);
              break;
            default:
              fail(std::string("unknown escape \\") + n);
          }
        } else if (c == '"') {
          closed = true;
          break;
        } else {
          s.push_back(c);
        }
      }
      if (!closed) fail("unterminated string");
      const std::string rest = trim(raw.substr(i + 1));
      if (!rest.empty() && rest.front() != '#') fail("trailing text after string");
      value = s;
    } else {
      const auto hash = raw.find('#');
      if (hash != std::string::npos) raw = trim(raw.substr(0, hash));
      if (raw == "true") {
        value = true;
      } else if (raw == "false") {
        value = false;
      } else {
        std::string digits;
        for (char c : raw) {
          if (c != '_') digits.push_back(c);
        }
        try {
          std::size_t used = 0;
          const bool looks_real = digits.find_first_of(".eE") != std::string::npos;
          if (looks_real) {
            value = std::stod(digits, &used);
          } else {
            value = static_cast<std::int64_t>(std::stoll(digits, &used));
          }
          if (used != digits.size()) fail("malformed value '" + raw + "'");
        } catch (const std::logic_error&) {
          fail("malformed value '" + raw + "'");
        }
      }
    }
    const std::string full = section.empty() ? key : section + "." + key;
    if (cfg.values_.count(full)) fail("duplicate key '" + full + "'");
    cfg.values_[full] = std::move(value);
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  ConfigFile cfg = parse(in, path);
  cfg.base_dir_ = std::filesystem::path(path).parent_path().string();
  return cfg;
}

std::string ConfigFile::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (auto s = std::get_if<std::string>(&it->second)) return *s;
  throw ConfigError(source_ + ": '" + key + "' must be a string");
}

std::int64_t ConfigFile::get_int(const std::string& key, std::int64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (auto i = std::get_if<std::int64_t>(&it->second)) return *i;
  throw ConfigError(source_ + ": '" + key + "' must be an integer");
}

double ConfigFile::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (auto d = std::get_if<double>(&it->second)) return *d;
  if (auto i = std::get_if<std::int64_t>(&it->second)) return static_cast<double>(*i);
  throw ConfigError(source_ + ": '" + key + "' must be a number");
}

bool ConfigFile::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (auto b = std::get_if<bool>(&it->second)) return *b;
  throw ConfigError(source_ + ": '" + key + "' must be true or false");
}

void ConfigFile::reject_unknown(const std::set<std::string>& known) const {
  for (const auto& [k, v] : values_) {
    if (!known.count(k)) throw ConfigError(source_ + ": unknown key '" + k + "'");
  }
}

std::string ConfigFile::resolve_path(const std::string& p) const {
  if (p.empty() || base_dir_.empty() || std::filesystem::path(p).is_absolute()) return p;
  return (std::filesystem::path(base_dir_) / p).string();
}

}  // namespace gece
