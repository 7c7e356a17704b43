#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "redrisk/experiment.hpp"

namespace redrisk::config {

// `key = value` lines, optionally grouped under `[section]` headers (a key
// inside a section is read as `section.key`). '#' and ';' start comments.
// Unknown keys, duplicates, malformed values and out-of-range values throw
// ConfigError naming the key and line.
eval::ExperimentConfig parse_config(std::string_view text);
eval::ExperimentConfig load_config(const std::filesystem::path& path);

struct KeyInfo {
  std::string key;
  std::string expected;  // e.g. "real in (0,1)"
  std::string default_value;
};

// Every accepted key, in documentation order.
std::vector<KeyInfo> known_keys();

std::string sha256_hex(std::string_view bytes);

struct RunManifest {
  std::string config_path;
  std::string config_sha256;
  std::vector<std::uint64_t> seeds;
  std::string started_at;
  std::string finished_at;
  std::string status;  // "running", "complete" or "failed"
  std::vector<std::string> outputs;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

// Per-module format versions recorded in the manifest.
nlohmann::json module_versions();

std::string utc_timestamp();

}  // namespace redrisk::config
