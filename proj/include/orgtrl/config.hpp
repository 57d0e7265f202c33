#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "orgtrl/common.hpp"

namespace orgtrl {

// Flat key=value configuration. Keys come from a fixed registry; unknown keys
// are rejected both in files and in --set overrides.
class Config {
 public:
  Config();  // registry defaults

  void load_file(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);
  void set_kv(const std::string& key_eq_value);  // "key=value"

  const std::string& get(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  double get_real(const std::string& key) const;
  // org.top_k: nullopt means "all"
  std::optional<std::int64_t> get_top_k(const std::string& key) const;

  bool has_value(const std::string& key) const { return !get(key).empty(); }

  void save(const std::filesystem::path& path) const;
  static const std::map<std::string, std::string>& registry();

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace orgtrl
