// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace histoniche::cli {

struct ConfigKey {
  const char* section;
  const char* name;
  const char* default_value;
  const char* help;
};

// Every recognized key, grouped by section, with its default.
const std::vector<ConfigKey>& config_keys();

// Flat key -> value store. Sections only group keys in files; key names are
// unique across sections so each one maps to a same-named --flag.
class RunConfig {
 public:
  RunConfig();

  // Loads "key = value" lines under [section] headers, or the "config"
  // object of a run manifest when the file starts with '{'.
  void load_file(const std::string& path);
  void set(const std::string& key, const std::string& value);

  const std::string& str(const std::string& key) const;
  double real(const std::string& key) const;
  long long integer(const std::string& key) const;
  std::size_t size(const std::string& key) const;
  std::uint64_t seed(const std::string& key) const;
  bool flag(const std::string& key) const;

  // Output directory: out_dir, else $HISTONICHE_OUT_DIR, else "histoniche_out".
  std::string out_dir() const;
  std::string out_path(const std::string& file) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace histoniche::cli
