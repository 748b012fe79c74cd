#pragma once

// Flat "key = value" run configuration shared by every subcommand.
//
//   # comment
//   version = 1
//   ball.r = 1
//   train.r = 0.01
//   flow.nodes = 65
//
// Every key has a documented default; unknown keys, duplicates and
// malformed values are rejected with ConfigError. Later sources override
// earlier ones: defaults, then the file, then command-line overrides.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "hypflow/error.hpp"

namespace hypflow {

class ConfigError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

/// All recognised keys in documentation order.
const std::vector<ConfigKey>& config_schema();

class Config {
 public:
  /// Configuration holding every default.
  Config();

  void load_file(const std::filesystem::path& path);
  void load_text(const std::string& text, const std::string& origin = "<text>");
  /// Overrides one key; throws ConfigError for unknown keys.
  void set(const std::string& key, const std::string& value);
  /// Parses "key=value".
  void set_assignment(const std::string& assignment);

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::uint64_t> get_uint_list(const std::string& key) const;

  /// Effective configuration, one "key = value" per line in schema order.
  void write(std::ostream& os) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace hypflow
