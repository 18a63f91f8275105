#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vse/se3.hpp"

namespace vse {

/// Key-value text config: `key = value` lines grouped under `[section]`
/// headers, `#` starts a comment. Keys outside any section live in "".
class Config {
 public:
  Config() = default;

  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text);

  bool has(const std::string& section, const std::string& key) const;

  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  int get_int(const std::string& section, const std::string& key, int fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  Vec3 get_vec3(const std::string& section, const std::string& key, const Vec3& fallback) const;
  /// Comma-separated list, whitespace trimmed.
  std::vector<std::string> get_list(const std::string& section, const std::string& key) const;

  void set(const std::string& section, const std::string& key, const std::string& value);

  const std::map<std::string, std::map<std::string, std::string>>& sections() const {
    return sections_;
  }

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace vse
