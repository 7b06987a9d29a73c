#pragma once

// Flat key=value run configuration shared by every subcommand. Values are
// kept as strings and converted on access; unknown keys are rejected.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "causeptr/evaluation.hpp"

namespace causeptr::cli {

struct KeyInfo {
  std::string name;
  std::string default_value;
  std::string help;
};

class RunConfig {
 public:
  /// Every known key at its default.
  RunConfig();

  static const std::vector<KeyInfo>& keys();
  static bool known(std::string_view key);

  /// Throws kInvalidArgument for an unknown key.
  void set(std::string_view key, std::string value);
  /// "key = value" lines; blank lines and '#' comments ignored. Later lines win.
  void merge_text(std::string_view text, std::string_view origin = "config");
  void merge_file(const std::string& path);

  const std::string& get(std::string_view key) const;
  bool has_value(std::string_view key) const { return !get(key).empty(); }
  int get_int(std::string_view key) const;
  double get_double(std::string_view key) const;
  bool get_bool(std::string_view key) const;
  std::uint64_t get_u64(std::string_view key) const;

  /// Fully resolved configuration, one "key = value" line per key, sorted.
  std::string render() const;

  TrainConfig train_config() const;
  DecodeConfig decode_config() const;
  std::vector<Ordering> orderings() const;

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

}  // namespace causeptr::cli
