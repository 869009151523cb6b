#pragma once

// Flat key=value configuration files.
//
//   # comment
//   width = 16
//   goal_fractions = 0.4, 0.1, 0.5
//
// Blank lines and '#' comments are ignored. Keys are [a-z0-9_.]+; a key may
// appear once. Lookups record which keys were consumed so that leftovers can
// be reported as unknown.

#include <charconv>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "hupa/binary_io.hpp"

namespace hupa {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, int line, const std::string& what)
      : std::runtime_error(source + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline bool valid_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '.')) return false;
  return true;
}

}  // namespace detail

class Config {
 public:
  struct Entry {
    std::string value;
    int line = 0;
  };

  static Config parse(std::string_view text, std::string source = "<config>") {
    Config cfg;
    cfg.source_ = std::move(source);
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const auto nl = text.find('\n', pos);
      std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
      pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) throw ConfigError(cfg.source_, line_no, "expected key = value");
      const std::string key(detail::trim(line.substr(0, eq)));
      if (!detail::valid_key(key)) throw ConfigError(cfg.source_, line_no, "invalid key '" + key + "'");
      const std::string value(detail::trim(line.substr(eq + 1)));
      if (value.empty()) throw ConfigError(cfg.source_, line_no, "missing value for '" + key + "'");
      if (cfg.entries_.contains(key))
        throw ConfigError(cfg.source_, line_no,
                          "duplicate key '" + key + "' (first set on line " + std::to_string(cfg.entries_[key].line) +
                              ")");
      cfg.entries_[key] = {value, line_no};
    }
    return cfg;
  }

  static Config load(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    return parse(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), path);
  }

  /// Adds or replaces a value (command-line overrides).
  void set(const std::string& key, std::string value) { entries_[key] = {std::move(value), 0}; }

  bool has(const std::string& key) const { return entries_.contains(key); }
  const std::string& source() const { return source_; }

  template <class T>
  T get(const std::string& key, T fallback) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    used_.insert(key);
    return convert<T>(it->second, key);
  }

  template <class T>
  std::vector<T> get_list(const std::string& key, std::vector<T> fallback) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    used_.insert(key);
    std::vector<T> out;
    std::string_view rest = it->second.value;
    while (true) {
      const auto comma = rest.find(',');
      const std::string item(detail::trim(rest.substr(0, comma)));
      out.push_back(convert<T>({item, it->second.line}, key));
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    return out;
  }

  /// Throws on the first key that no lookup consumed.
  void reject_unknown() const {
    for (const auto& [key, e] : entries_)
      if (!used_.contains(key)) throw ConfigError(source_, e.line, "unknown key '" + key + "'");
  }

 private:
  template <class T>
  T convert(const Entry& e, const std::string& key) const {
    const std::string& v = e.value;
    auto fail = [&](const char* what) -> T {
      throw ConfigError(source_, e.line, "value '" + v + "' for '" + key + "' is not " + what);
    };
    if constexpr (std::is_same_v<T, std::string>) {
      return v;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (v == "1" || v == "true" || v == "on") return true;
      if (v == "0" || v == "false" || v == "off") return false;
      return fail("a boolean");
    } else if constexpr (std::is_floating_point_v<T>) {
      std::istringstream is(v);
      T out{};
      if (!(is >> out) || !is.eof()) return fail("a number");
      return out;
    } else {
      T out{};
      const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
      if (ec != std::errc() || ptr != v.data() + v.size()) return fail("an integer");
      return out;
    }
  }

  std::string source_;
  std::map<std::string, Entry> entries_;
  mutable std::set<std::string> used_;
};

}  // namespace hupa
