#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>

namespace gece {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat view of a TOML-style file: `[section]` headers and `key = value`
/// lines, values being double-quoted strings, integers, reals or booleans.
/// `#` starts a comment outside strings. Keys are addressed as
/// "section.key" (or "key" before the first header).
class ConfigFile {
 public:
  using Value = std::variant<std::string, std::int64_t, double, bool>;

  static ConfigFile parse(std::istream& in, const std::string& source = "<config>");
  static ConfigFile load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Throws naming the first key not in `known`.
  void reject_unknown(const std::set<std::string>& known) const;

  void set(const std::string& key, Value v) { values_[key] = std::move(v); }
  const std::string& source() const { return source_; }
  /// Directory of the loaded file; relative paths resolve against it.
  const std::string& base_dir() const { return base_dir_; }
  std::string resolve_path(const std::string& p) const;

 private:
  std::map<std::string, Value> values_;
  std::string source_;
  std::string base_dir_;
};

}  // namespace gece
