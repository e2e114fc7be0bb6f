#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "flowlab/densities.hpp"
#include "flowlab/trainer.hpp"

namespace flowlab {

using Json = nlohmann::json;

/// Reads a TOML (default) or JSON (".json" extension) config file.
Json load_config_file(const std::string& path);

/// A density declared in a config table, plus the table with all defaults filled in.
///
///   {type = "ring", M = 20, sigma = 0.3, radius = 1.0}
///   {type = "gaussian", mean = [0, 0], covariance = [[1, 0.5], [0.5, 1]]}   (or rho = 0.5)
///   {type = "standard_normal", dim = 2}
///   {type = "gmm", components = [{weight = 0.5, mean = [..], covariance = [[..], [..]]}, ...]}
///   {type = "bimodal"}                        two-mode mixture of the grid experiment
///   {type = "conditional_bimodal", separation = 1.5, sigma = 0.3}
///   {type = "box", plateau = 0.9, epsilon = 0.1}
struct DensitySpec {
    AnalyticDensity density;
    Json resolved;
};

/// `key_path` prefixes error messages, e.g. "target".
DensitySpec parse_density(const Json& table, const std::string& key_path);

/// Looks up a density: an existing config file whose [target] table (or top
/// level) declares it, or one of the built-in type names above.
DensitySpec resolve_target(const std::string& file_or_name);

TrainerConfig trainer_config_from_json(const Json& table, const std::string& key_path);
Json trainer_config_to_json(const TrainerConfig& config);

/// FNV-1a 64-bit hash of the canonical (sorted-key) JSON dump, as 16 hex digits.
std::string config_hash(const Json& resolved);

/// Typed lookups with defaults; errors name the full key path.
double get_double(const Json& table, const std::string& key, double fallback, const std::string& key_path);
std::uint64_t get_unsigned(const Json& table, const std::string& key, std::uint64_t fallback,
                           const std::string& key_path);
bool get_bool(const Json& table, const std::string& key, bool fallback, const std::string& key_path);
std::string get_string(const Json& table, const std::string& key, const std::string& fallback,
                       const std::string& key_path);
/// Subtable or an empty object when absent.
Json get_table(const Json& table, const std::string& key, const std::string& key_path);

/// Rejects keys of `table` outside `allowed`.
void require_known_keys(const Json& table, std::initializer_list<const char*> allowed, const std::string& key_path);

}  // namespace flowlab
