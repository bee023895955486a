#include "entfact/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "entfact/error.hpp"
#include "entfact/text.hpp"

namespace entfact {

namespace {

[[noreturn]] void fail(std::size_t line, const std::string& reason) {
  throw Error(ErrorCode::ConfigError, "config line " + std::to_string(line) + ": " + reason);
}

bool valid_key(std::string_view key) {
  if (key.empty()) return false;
  for (char c : key) {
    if (!(is_word_byte(static_cast<unsigned char>(c)) || c == '.' || c == '-')) return false;
  }
  return key.front() != '.' && key.back() != '.';
}

// Strips a trailing comment that is not inside a quoted string.
std::string_view strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted && c == '\\') {
      ++i;
    } else if (c == '"') {
      quoted = !quoted;
    } else if (c == '#' && !quoted) {
      return line.substr(0, i);
    }
  }
  return line;
}

std::optional<Config::Value> parse_value(std::string_view text) {
  const std::string_view s = trim(text);
  if (s.empty()) return std::nullopt;
  if (s.front() == '"') {
    if (s.size() < 2 || s.back() != '"') return std::nullopt;
    std::string out;
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
      char c = s[i];
      if (c == '"') return std::nullopt;
      if (c == '\\') {
        if (i + 2 >= s.size()) return std::nullopt;
        switch (s[++i]) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default: return std::nullopt;
        }
      }
      out.push_back(c);
    }
    return out;
  }
  if (s == "true") return true;
  if (s == "false") return false;
  std::string digits;
  for (char c : s) {
    if (c != '_') digits.push_back(c);
  }
  std::int64_t i = 0;
  auto [iend, iec] = std::from_chars(digits.data(), digits.data() + digits.size(), i);
  if (iec == std::errc() && iend == digits.data() + digits.size()) return i;
  double d = 0.0;
  auto [dend, dec] = std::from_chars(digits.data(), digits.data() + digits.size(), d);
  if (dec == std::errc() && dend == digits.data() + digits.size()) return d;
  return std::nullopt;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out.push_back(c);
    }
  }
  out.push_back('"');
  return out;
}

std::string render(const Config::Value& v) {
  if (const auto* s = std::get_if<std::string>(&v)) return quote(*s);
  if (const auto* b = std::get_if<bool>(&v)) return *b ? "true" : "false";
  if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  char buffer[40];
  std::snprintf(buffer, sizeof buffer, "%.17g", std::get<double>(v));
  return buffer;
}

}  // namespace

Config Config::parse(std::string_view text) {
  Config config;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(line_no, "unterminated section header");
      const std::string_view name = trim(line.substr(1, line.size() - 2));
      if (!valid_key(name)) fail(line_no, "bad section name");
      section = std::string(name);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(line_no, "expected key = value");
    const std::string_view key = trim(line.substr(0, eq));
    if (!valid_key(key)) fail(line_no, "bad key '" + std::string(key) + "'");
    auto value = parse_value(line.substr(eq + 1));
    if (!value) fail(line_no, "bad value for '" + std::string(key) + "'");
    const std::string full = section.empty() ? std::string(key) : section + "." + std::string(key);
    if (!config.values_.emplace(full, std::move(*value)).second) fail(line_no, "duplicate key '" + full + "'");
  }
  return config;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot read config " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

void Config::set(std::string_view key, std::string_view literal) {
  if (!valid_key(key)) throw Error(ErrorCode::ConfigError, "bad override key '" + std::string(key) + "'");
  auto value = parse_value(literal);
  // bare words on the command line are taken as strings
  if (!value) value = std::string(trim(literal));
  values_.insert_or_assign(std::string(key), std::move(*value));
}

bool Config::contains(std::string_view key) const { return values_.find(key) != values_.end(); }

std::string Config::get_string(std::string_view key, std::string fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (const auto* s = std::get_if<std::string>(&it->second)) return *s;
  throw Error(ErrorCode::ConfigError, "'" + std::string(key) + "' must be a string");
}

std::int64_t Config::get_int(std::string_view key, std::int64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (const auto* i = std::get_if<std::int64_t>(&it->second)) return *i;
  throw Error(ErrorCode::ConfigError, "'" + std::string(key) + "' must be an integer");
}

double Config::get_double(std::string_view key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (const auto* d = std::get_if<double>(&it->second)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(&it->second)) return static_cast<double>(*i);
  throw Error(ErrorCode::ConfigError, "'" + std::string(key) + "' must be a number");
}

bool Config::get_bool(std::string_view key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (const auto* b = std::get_if<bool>(&it->second)) return *b;
  throw Error(ErrorCode::ConfigError, "'" + std::string(key) + "' must be true or false");
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& [key, value] : values_) out += key + " = " + render(value) + "\n";
  return out;
}

}  // namespace entfact
