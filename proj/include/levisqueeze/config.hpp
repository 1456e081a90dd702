#pragma once

#include <cstdint>
#include "json.hpp"
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "levisqueeze/noise_model.hpp"

namespace levisqueeze {

/// Raised for malformed or unknown configuration entries. `key()` names the
/// offending entry as `section.key` (or just `key` at top level).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::runtime_error(key + ": " + message), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// Parses the flat subset of TOML used by run configurations: `[section]`
/// headers, `key = value` pairs with numbers, booleans and basic strings, and
/// `#` comments. Produces {"key": v, "section": {"key": v}}.
nlohmann::json parse_flat_toml(std::string_view text);

/// Reads `path` as JSON when it ends in .json, TOML otherwise.
nlohmann::json read_config_file(const std::string& path);

enum class OutputFormat { Csv, Json };

struct RawCoefficients {
  double a1{1.0};
  double a2{1.0};
  double d1{0.5};
  double d2{0.5};
  double m{1.0};
};

struct ProtocolSettings {
  double omega1{3.0 * constants::kPi / 4.0};
  double omega2{3.0 * constants::kPi / 2.0};
  int cycles{10};
  double equilibration_time{4.0};
};

struct MeasurementSettings {
  std::optional<double> eta;  // si mode: replaces physical.efficiency
  std::optional<double> b;  // overrides the backaction strength
};

/// Optional SI rate overrides; unset entries are estimated from PhysicalParams.
struct RateOverrides {
  std::optional<double> gamma;
  std::optional<double> lambda;
  std::optional<double> recoil;
  OccupationPolicy occupation{OccupationPolicy::RecomputePerSegment};
};

struct OutputSettings {
  OutputFormat format{OutputFormat::Csv};
  std::string path{"."};
  std::uint64_t seed{0};
};

struct RunConfig {
  UnitSystem mode{UnitSystem::Natural};
  std::optional<PhysicalParams> physical;     // si mode
  std::optional<RawCoefficients> raw;         // natural mode
  RateOverrides rates;
  ProtocolSettings protocol;
  MeasurementSettings measurement;
  std::optional<SymMat2> initial;
  OutputSettings output;

  /// Coefficients at trap frequency `omega` with every override applied.
  DynamicsCoefficients coefficients_at(double omega) const;
  /// si mode: physical parameters with the measurement efficiency applied.
  PhysicalParams effective_physical() const;
  NoiseRates rates_at(double omega) const;
  double omega1() const;
  double omega2() const;
  double mass() const;
};

/// Validates and converts a parsed configuration. In natural mode a missing
/// [coefficients] section takes a1 = a2 = 1, d1 = d2 = 0.5; in si mode a missing
/// [physical] section takes the PhysicalParams defaults.
RunConfig run_config_from_json(const nlohmann::json& root);
RunConfig default_run_config(UnitSystem mode);

}  // namespace levisqueeze
