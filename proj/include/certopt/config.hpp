#pragma once

// Run configuration: one flat `dotted.key=value` pair per line, `#` starts a comment.
// Later assignments (including command-line overrides) replace earlier ones.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>

#include <json.hpp>

namespace certopt {

class Config {
 public:
  // Throws ConfigError naming the source and line on malformed input.
  static Config parse(std::string_view text, const std::string& source = "<config>");
  static Config load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  void erase(const std::string& key) { entries_.erase(key); }
  void merge(const Config& overrides);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Throws ConfigError for any key outside `known`.
  void check_known(const std::set<std::string>& known) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }
  std::string to_text() const;
  nlohmann::json to_json() const;

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace certopt
