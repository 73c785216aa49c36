#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "dynfire/training.hpp"

namespace dynfire {

/// Ordered `key = value` pairs. Lines starting with '#' and blank lines are
/// ignored; a repeated key keeps the last value.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values(const std::filesystem::path& path);
std::string format_key_values(const KeyValues& kv);
void write_key_values(const KeyValues& kv, const std::filesystem::path& path);

/// Keys understood by apply_train_config.
const std::vector<std::string>& train_config_keys();

/// Overlays `kv` on `config`. ConfigError for unknown keys or malformed values.
void apply_train_config(TrainConfig& config, const KeyValues& kv);
/// Every training key with its resolved value.
KeyValues train_config_values(const TrainConfig& config);

TrainConfig load_train_config(const std::filesystem::path& path);

/// Exact text form of a double (shortest round-trip representation).
std::string format_double(double v);

}  // namespace dynfire
