#pragma once

#include "json.hpp"
#include <optional>
#include <string>

#include "levisqueeze/linalg.hpp"

namespace levisqueeze {

/// CODATA 2018 values, SI.
namespace constants {
inline constexpr double kHbar = 1.054571817e-34;           // J s
inline constexpr double kBoltzmann = 1.380649e-23;         // J / K
inline constexpr double kSpeedOfLight = 299792458.0;       // m / s
inline constexpr double kVacuumPermittivity = 8.8541878128e-12;  // F / m
inline constexpr double kPi = 3.14159265358979323846;
}  // namespace constants

/// SI: every quantity in SI units. Natural: hbar = m = 1 and the drift,
/// diffusion and backaction entries are dimensionless numbers.
enum class UnitSystem { SI, Natural };

inline double hbar_of(UnitSystem units) { return units == UnitSystem::SI ? constants::kHbar : 1.0; }

/// Experimental inputs, SI units throughout.
struct PhysicalParams {
  double mass{1e-18};                   // kg
  double radius{50e-9};                 // m
  std::optional<double> density;        // kg / m^3
  double pressure{1e-8};                // Pa
  double chamber_temperature{50.0};     // K
  double gas_molecule_mass{1e-24};      // kg
  double omega1{2.0 * constants::kPi * 50e3};   // rad / s
  double omega2{2.0 * constants::kPi * 100e3};  // rad / s
  double tweezer_power{0.5};            // W
  double tweezer_waist{1000e-9};        // m
  double laser_wavelength{1550e-9};     // m
  double relative_dielectric{2.0};
  double asymmetry_x{1.0};
  double asymmetry_y{0.9};
  double efficiency{0.0};               // eta in [0, 1]
  std::optional<double> mean_occupation_override;

  /// Throws InvalidParameters naming the first offending field.
  void validate() const;
};

/// Flat key/value object with the field names above. Unknown keys are errors.
PhysicalParams physical_params_from_json(const nlohmann::json& flat);
nlohmann::json to_json(const PhysicalParams& p);
/// Reads a flat JSON (.json) or TOML (anything else) parameter file.
PhysicalParams load_physical_params(const std::string& path);

struct DynamicsCoefficients {
  double a1{};     // 1/s
  double a2{};     // 1/s
  double d1{};     // position diffusion
  double d2{};     // momentum diffusion
  double b{};      // backaction strength
  double omega{};  // rad/s
  double m{1.0};   // kg (1 in natural units)
  UnitSystem units{UnitSystem::Natural};

  double hbar() const { return hbar_of(units); }
  void validate() const;
};

/// The three labelled momentum-diffusion contributions.
struct NoiseBreakdown {
  double d2_gamma{};   // collisional, 2 gamma kB m T
  double d2_lambda{};  // thermal, nbar lambda hbar m omega
  double d2_Lambda{};  // photon recoil, 2 hbar^2 Lambda
  /// The remaining nbar-independent thermal piece, lambda hbar m omega / 2.
  double d2_lambda_vacuum{};

  double total() const { return d2_gamma + d2_lambda + d2_lambda_vacuum + d2_Lambda; }
};

/// Gas damping rate from kinetic theory, gamma = (64/3) R^2 P / (m v_gas).
double gas_damping(const PhysicalParams& p);

/// Bose occupation 1 / (exp(hbar omega / kB T) - 1).
double mean_occupation(double omega, double temperature);

/// Recoil decoherence rate of the trapping light, 1 / (m^2 s).
double photon_recoil_rate(const PhysicalParams& p);

/// Rates entering the SI coefficient map.
struct NoiseRates {
  double gamma{};          // collisional damping, 1/s
  double lambda{};         // thermalisation rate, 1/s
  double recoil{};         // Lambda, 1/(m^2 s)
  double mean_occupation{};
};

enum class OccupationPolicy {
  RecomputePerSegment,  ///< nbar evaluated at each segment's trap frequency
  FrozenAtOmega2,       ///< nbar evaluated once, at omega2
};

/// Resolves the rates for a parameter set: gamma from kinetic theory, lambda =
/// gamma, Lambda from the recoil formula, nbar from the override or the Bose
/// factor at `omega` (or at omega2 when frozen).
NoiseRates estimate_rates(const PhysicalParams& p, double omega,
                          OccupationPolicy policy = OccupationPolicy::RecomputePerSegment);

/// Drift/diffusion/backaction coefficients at trap frequency `omega`.
DynamicsCoefficients coefficients(const PhysicalParams& p, double omega, const NoiseRates& rates);

NoiseBreakdown noise_breakdown(const PhysicalParams& p, double omega, const NoiseRates& rates);

/// Natural-unit coefficients straight from their dimensionless values.
DynamicsCoefficients natural_coefficients(double a1, double a2, double d1, double d2, double b,
                                          double omega, double m = 1.0);

struct DynamicsMatrices {
  Mat2 a;
  SymMat2 d;
  Mat2 b;

  SymMat2 bbt() const { return gram(b); }
};

/// A = ((-a1, 1/m), (-m w^2, -a2)), D = diag(d1, d2), B = ((0, b), (0, 0)).
DynamicsMatrices build_matrices(const DynamicsCoefficients& c);

/// Type of general-dyne detection. `s` is the squeezing of the measured
/// light quadrature; `homodyne` takes the s -> infinity limit.
struct GeneralDyne {
  double s{1.0};
  bool homodyne{false};
  /// Multiply by sqrt(2) so the homodyne limit equals b = sqrt(8 eta Lambda).
  bool match_coefficient_normalization{false};
};

/// B = C Omega sqrt((sigma_B + sigma_M*)^{-1}) with sigma_B = 1 and the
/// inefficient-measurement mixture sigma_M* = sigma_M / eta + (1 - eta)/eta.
///
/// Note: in the homodyne limit this evaluates to a single entry 2 sqrt(eta
/// Lambda), a factor sqrt(2) below b = sqrt(8 eta Lambda) used by
/// `coefficients`. The simulator uses the latter; this function exposes the
/// matrix algebra of the measurement model as written unless
/// `match_coefficient_normalization` is set. With sigma_M diagonal the result
/// has a single nonzero entry (1,2) for every s.
Mat2 general_dyne_backaction(double recoil, double eta, GeneralDyne kind);

}  // namespace levisqueeze
