#pragma once

// Flat key=value experiment configuration. Keys map 1:1 to CLI flags
// (dashes and underscores are interchangeable).

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "eisnet/datagen.hpp"
#include "eisnet/error.hpp"
#include "eisnet/trainer.hpp"

namespace eisnet {

/// Bad key, bad value or violated invariant. key() names the offender.
class ConfigError : public DomainError {
public:
    ConfigError(std::string key, const std::string& message)
        : DomainError("config key '" + key + "': " + message), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

struct ExperimentConfig {
    TrainConfig train;
    SynthOptions data;
    std::size_t seeds = 3; // sweeps run seeds train.seed, train.seed+1, ...
    std::size_t jobs = 1;
    std::string preset = "pacs";

    std::vector<std::uint64_t> seed_list() const;
    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
/// Whole-string parses; throw ConfigError naming `key` on junk.
double parse_double(std::string_view key, std::string_view text);
std::uint64_t parse_uint(std::string_view key, std::string_view text);
int parse_int(std::string_view key, std::string_view text);
bool parse_bool(std::string_view key, std::string_view text);

/// "p-shuffle" → "p_shuffle".
std::string canonical_key(std::string_view key);
/// Every accepted key, in canonical order.
const std::vector<std::string>& config_keys();

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Parses flat text: one key=value per line, '#' comments, blank lines ignored.
KeyValues parse_key_values(std::string_view text, std::string_view source = "config");

/// Applies one key to `cfg`. Does not validate cross-field invariants.
void set_key(ExperimentConfig& cfg, std::string_view key, std::string_view value);

/// Built-in defaults, then the preset (whichever source names it, flag first),
/// then file keys, then flag keys. Validates the result.
ExperimentConfig resolve_config(const KeyValues& file_keys, const KeyValues& flag_keys);
ExperimentConfig load_config(const std::filesystem::path* file, const KeyValues& flag_keys);

/// Re-raises TrainConfig invariant failures as ConfigError with the key.
void validate(const ExperimentConfig& cfg);

/// Canonical key=value text: every key, fixed order. Parsing it back gives an equal config.
std::string to_config_text(const ExperimentConfig& cfg);

} // namespace eisnet
