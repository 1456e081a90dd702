#include "levisqueeze/noise_model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "levisqueeze/config.hpp"

namespace levisqueeze {

using constants::kBoltzmann;
using constants::kHbar;
using constants::kPi;

namespace {

void require_positive(double value, const char* name) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw NumericalError(ErrorCode::InvalidParameters, std::string(name) + " must be positive and finite");
  }
}

void require_nonnegative(double value, const char* name) {
  if (!(value >= 0.0) || !std::isfinite(value)) {
    throw NumericalError(ErrorCode::InvalidParameters, std::string(name) + " must be >= 0 and finite");
  }
}

double sphere_volume(double radius) { return 4.0 / 3.0 * kPi * radius * radius * radius; }

}  // namespace

void PhysicalParams::validate() const {
  require_positive(mass, "mass");
  require_positive(radius, "radius");
  if (density) require_positive(*density, "density");
  require_positive(pressure, "pressure");
  require_positive(chamber_temperature, "chamber_temperature");
  require_positive(gas_molecule_mass, "gas_molecule_mass");
  require_positive(omega1, "omega1");
  require_positive(omega2, "omega2");
  require_positive(tweezer_power, "tweezer_power");
  require_positive(tweezer_waist, "tweezer_waist");
  require_positive(laser_wavelength, "laser_wavelength");
  require_positive(relative_dielectric, "relative_dielectric");
  require_positive(asymmetry_x, "asymmetry_x");
  require_positive(asymmetry_y, "asymmetry_y");
  if (!(efficiency >= 0.0 && efficiency <= 1.0)) {
    throw NumericalError(ErrorCode::InvalidParameters, "efficiency must lie in [0, 1]");
  }
  if (mean_occupation_override) require_nonnegative(*mean_occupation_override, "mean_occupation_override");
  if (!(omega1 < omega2)) {
    throw NumericalError(ErrorCode::InvalidParameters, "omega1 must be below omega2");
  }
  if (density) {
    const double implied = *density * sphere_volume(radius);
    if (std::abs(implied - mass) > 0.01 * mass) {
      throw NumericalError(ErrorCode::InvalidParameters,
                           "mass disagrees with density * volume by more than 1%");
    }
  }
}

PhysicalParams physical_params_from_json(const nlohmann::json& flat) {
  if (!flat.is_object()) throw ConfigError("physical", "expected a flat key/value table");
  PhysicalParams p;
  for (const auto& [key, value] : flat.items()) {
    if (!value.is_number()) throw ConfigError(key, "expected a number");
    const double v = value.get<double>();
    if (key == "mass") p.mass = v;
    else if (key == "radius") p.radius = v;
    else if (key == "density") p.density = v;
    else if (key == "pressure") p.pressure = v;
    else if (key == "chamber_temperature") p.chamber_temperature = v;
    else if (key == "gas_molecule_mass") p.gas_molecule_mass = v;
    else if (key == "omega1") p.omega1 = v;
    else if (key == "omega2") p.omega2 = v;
    else if (key == "tweezer_power") p.tweezer_power = v;
    else if (key == "tweezer_waist") p.tweezer_waist = v;
    else if (key == "laser_wavelength") p.laser_wavelength = v;
    else if (key == "relative_dielectric") p.relative_dielectric = v;
    else if (key == "asymmetry_x") p.asymmetry_x = v;
    else if (key == "asymmetry_y") p.asymmetry_y = v;
    else if (key == "efficiency") p.efficiency = v;
    else if (key == "mean_occupation_override") p.mean_occupation_override = v;
    else throw ConfigError(key, "unknown parameter");
  }
  try {
    p.validate();
  } catch (const NumericalError& e) {
    throw ConfigError("physical", e.what());
  }
  return p;
}

nlohmann::json to_json(const PhysicalParams& p) {
  nlohmann::json j = {
      {"mass", p.mass},
      {"radius", p.radius},
      {"pressure", p.pressure},
      {"chamber_temperature", p.chamber_temperature},
      {"gas_molecule_mass", p.gas_molecule_mass},
      {"omega1", p.omega1},
      {"omega2", p.omega2},
      {"tweezer_power", p.tweezer_power},
      {"tweezer_waist", p.tweezer_waist},
      {"laser_wavelength", p.laser_wavelength},
      {"relative_dielectric", p.relative_dielectric},
      {"asymmetry_x", p.asymmetry_x},
      {"asymmetry_y", p.asymmetry_y},
      {"efficiency", p.efficiency},
  };
  if (p.density) j["density"] = *p.density;
  if (p.mean_occupation_override) j["mean_occupation_override"] = *p.mean_occupation_override;
  return j;
}

PhysicalParams load_physical_params(const std::string& path) {
  return physical_params_from_json(read_config_file(path));
}

void DynamicsCoefficients::validate() const {
  require_nonnegative(a1, "a1");
  if (!(a2 >= a1) || !std::isfinite(a2)) {
    throw NumericalError(ErrorCode::InvalidParameters, "a2 must be >= a1");
  }
  require_nonnegative(d1, "d1");
  require_nonnegative(d2, "d2");
  require_nonnegative(b, "b");
  require_nonnegative(omega, "omega");
  require_positive(m, "m");
}

double gas_damping(const PhysicalParams& p) {
  const double v_gas = std::sqrt(8.0 * kBoltzmann * p.chamber_temperature / (kPi * p.gas_molecule_mass));
  return 64.0 / 3.0 * p.radius * p.radius * p.pressure / (p.mass * v_gas);
}

double mean_occupation(double omega, double temperature) {
  require_positive(omega, "omega");
  require_positive(temperature, "temperature");
  return 1.0 / std::expm1(kHbar * omega / (kBoltzmann * temperature));
}

double photon_recoil_rate(const PhysicalParams& p) {
  using constants::kSpeedOfLight;
  using constants::kVacuumPermittivity;
  const double eps = p.relative_dielectric;
  const double eps_c = 3.0 * (eps - 1.0) / (eps + 2.0);
  const double volume = sphere_volume(p.radius);
  const double field = std::sqrt(4.0 * p.tweezer_power / (kPi * kVacuumPermittivity * kSpeedOfLight *
                                                          p.tweezer_waist * p.tweezer_waist *
                                                          p.asymmetry_x * p.asymmetry_y));
  const double k0 = 2.0 * kPi / p.laser_wavelength;
  const double amplitude = eps_c * volume * field / (2.0 * kPi);
  return 7.0 * kPi * kVacuumPermittivity / (30.0 * kHbar) * amplitude * amplitude * std::pow(k0, 5);
}

NoiseRates estimate_rates(const PhysicalParams& p, double omega, OccupationPolicy policy) {
  NoiseRates r;
  r.gamma = gas_damping(p);
  r.lambda = r.gamma;
  r.recoil = photon_recoil_rate(p);
  if (p.mean_occupation_override) {
    r.mean_occupation = *p.mean_occupation_override;
  } else {
    const double w = policy == OccupationPolicy::FrozenAtOmega2 ? p.omega2 : omega;
    r.mean_occupation = mean_occupation(w, p.chamber_temperature);
  }
  return r;
}

DynamicsCoefficients coefficients(const PhysicalParams& p, double omega, const NoiseRates& rates) {
  require_positive(omega, "omega");
  require_nonnegative(rates.gamma, "gamma");
  require_nonnegative(rates.lambda, "lambda");
  require_nonnegative(rates.recoil, "recoil rate");

  const double m = p.mass;
  const double t_cl = p.chamber_temperature;
  const double n_fac = 2.0 * rates.mean_occupation + 1.0;

  DynamicsCoefficients c;
  c.units = UnitSystem::SI;
  c.m = m;
  c.omega = omega;
  c.a1 = 0.5 * rates.lambda;
  c.a2 = c.a1 + rates.gamma;
  c.b = std::sqrt(8.0 * p.efficiency * rates.recoil);
  c.d1 = kHbar * kHbar * rates.gamma / (8.0 * kBoltzmann * m * t_cl) +
         kHbar * rates.lambda * n_fac / (2.0 * m * omega);
  c.d2 = 2.0 * rates.gamma * kBoltzmann * m * t_cl + 0.5 * rates.lambda * kHbar * m * omega * n_fac +
         2.0 * kHbar * kHbar * rates.recoil;
  return c;
}

NoiseBreakdown noise_breakdown(const PhysicalParams& p, double omega, const NoiseRates& rates) {
  const double m = p.mass;
  NoiseBreakdown n;
  n.d2_gamma = 2.0 * rates.gamma * kBoltzmann * m * p.chamber_temperature;
  n.d2_lambda = rates.mean_occupation * rates.lambda * kHbar * m * omega;
  n.d2_lambda_vacuum = 0.5 * rates.lambda * kHbar * m * omega;
  n.d2_Lambda = 2.0 * kHbar * kHbar * rates.recoil;
  return n;
}

DynamicsCoefficients natural_coefficients(double a1, double a2, double d1, double d2, double b,
                                          double omega, double m) {
  DynamicsCoefficients c;
  c.a1 = a1;
  c.a2 = a2;
  c.d1 = d1;
  c.d2 = d2;
  c.b = b;
  c.omega = omega;
  c.m = m;
  c.units = UnitSystem::Natural;
  return c;
}

DynamicsMatrices build_matrices(const DynamicsCoefficients& c) {
  c.validate();
  return {
      Mat2{-c.a1, 1.0 / c.m, -c.m * c.omega * c.omega, -c.a2},
      SymMat2::diag(c.d1, c.d2),
      Mat2{0.0, c.b, 0.0, 0.0},
  };
}

Mat2 general_dyne_backaction(double recoil, double eta, GeneralDyne kind) {
  require_nonnegative(recoil, "recoil rate");
  if (!(eta > 0.0 && eta <= 1.0)) {
    throw NumericalError(ErrorCode::InvalidEfficiency, "eta must lie in (0, 1]; use the Langevin path for eta = 0");
  }
  if (!kind.homodyne) require_positive(kind.s, "general-dyne parameter s");

  // sigma_B + sigma_M* with sigma_B = 1, sigma_M = diag(s, 1/s):
  // diag((s + 1) / eta, (1/s + 1) / eta). Its inverse square root is diagonal.
  const double inv_sqrt_xx = kind.homodyne ? 0.0 : std::sqrt(eta / (kind.s + 1.0));
  const double inv_sqrt_pp = kind.homodyne ? std::sqrt(eta) : std::sqrt(eta / (1.0 / kind.s + 1.0));
  const Mat2 c = Mat2::diag(2.0 * std::sqrt(recoil), 0.0);
  const Mat2 symplectic{0.0, 1.0, -1.0, 0.0};
  const double norm = kind.match_coefficient_normalization ? std::sqrt(2.0) : 1.0;
  return norm * (c * symplectic * Mat2::diag(inv_sqrt_xx, inv_sqrt_pp));
}

}  // namespace levisqueeze
