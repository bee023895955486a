#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

namespace entfact {

// Flat view of a TOML-style file: `[section]` headers and `key = value`
// lines become dotted keys ("train.seed"). Values are quoted strings,
// booleans, integers or floats; `#` starts a comment outside strings.
class Config {
 public:
  using Value = std::variant<std::string, std::int64_t, double, bool>;

  static Config parse(std::string_view text);
  static Config load(const std::filesystem::path& path);

  // Applies an override such as `train.seed=7` (value parsed like the file).
  void set(std::string_view key, std::string_view literal);

  bool contains(std::string_view key) const;
  const std::map<std::string, Value, std::less<>>& values() const { return values_; }

  std::string get_string(std::string_view key, std::string fallback = {}) const;
  std::int64_t get_int(std::string_view key, std::int64_t fallback) const;
  double get_double(std::string_view key, double fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;

  // Sorted `key = value` lines; the basis of the config hash.
  std::string canonical() const;

 private:
  std::map<std::string, Value, std::less<>> values_;
};

}  // namespace entfact
