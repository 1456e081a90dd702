#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "levisqueeze/config.hpp"
#include "levisqueeze/protocol.hpp"

namespace levisqueeze {

inline constexpr const char* kToolVersion = "0.1.0";

/// Named equal-length columns plus a metadata object. Non-finite values are
/// written as "inf"/"-inf"/"nan" in CSV and null in JSON.
struct Dataset {
  std::string figure_id;
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;
  nlohmann::json metadata = nlohmann::json::object();

  void add(const std::string& name, std::vector<double> values);
  const std::vector<double>& column(const std::string& name) const;
  std::size_t rows() const;
  /// Throws InvalidParameters when column lengths differ.
  void validate() const;
};

std::string to_csv(const Dataset& d);
std::string to_json_text(const Dataset& d);

std::string sha256_hex(const std::string& bytes);
/// First 16 hex digits of the SHA-256 of the canonical JSON text of `spec`.
std::string spec_hash(const nlohmann::json& spec);

/// Writes `<figure-id>_<hash>.csv` (or .json) into `dir` and returns the path.
std::string write_dataset(const Dataset& d, const std::string& dir, OutputFormat format);

/// `n` points from lo to hi inclusive.
std::vector<double> linear_grid(double lo, double hi, std::size_t n);
/// Logarithmic grid with `per_decade` intervals per factor of ten.
std::vector<double> log_grid(double lo, double hi, std::size_t per_decade);

struct SweepSpec {
  std::string variable;
  std::vector<double> grid;
  std::map<std::string, double> fixed;
  UnitSystem mode{UnitSystem::Natural};
  std::vector<std::string> outputs;

  /// Grid non-empty and strictly monotone; variable not also fixed.
  void validate() const;
};

/// Variables a sweep may vary: natural mode a1 a2 d1 d2 m b omega1 omega2;
/// si mode Q gamma lambda recoil eta pressure mass omega1 omega2.
/// Outputs: X_xx X_pp riccati_xx riccati_pp protocol_xx protocol_pp zeta
/// zeta_one_cycle sr_xx sr_pp sr_xp spectral_radius.
Dataset run_sweep(const SweepSpec& spec, const RunConfig& base);

struct Fig2Options {
  std::vector<double> a1_grid = linear_grid(0.05, 1.0, 200);
  double omega1{3.0 * constants::kPi / 4.0};
  double omega2{3.0 * constants::kPi / 2.0};
  double a2{1.0};
  double d1{2.0};
  double d2{2.0};
  double m{1.0};
  double b{2.0};
  double root_tolerance{1e-4};
};

/// Threshold a1 where the leading momentum rate changes sign, by bisection.
double fig2_root(const Fig2Options& o);
Dataset fig2_threshold(const Fig2Options& o = {});

struct Fig3Options {
  double a{1.0};
  double d{0.5};
  double m{1.0};
  double omega1{3.0 * constants::kPi / 4.0};
  double omega2{3.0 * constants::kPi / 2.0};
  // panel a
  std::vector<double> omega_grid = log_grid(0.5, 50.0, 200);
  std::vector<double> b_values{1.0, 3.0, 5.0};
  // panel b
  SymMat2 sigma0{1.0, 0.0, 1.0};
  double equilibration_time{4.0};
  int cycles{10};
  int dense_samples{20};
  double b_trace{3.0};
  // panel c
  std::vector<double> a_grid = linear_grid(0.1, 2.0, 60);
  std::vector<double> d_grid = linear_grid(0.1, 2.0, 60);
  std::vector<double> ratio_b_values{0.0, 3.0, 5.0};
};

Dataset fig3a_curves(const Fig3Options& o = {});
Dataset fig3b_trace(const Fig3Options& o = {});
Dataset fig3c_grid(const Fig3Options& o = {});

struct Fig4Options {
  PhysicalParams base = [] {
    PhysicalParams p;
    p.mean_occupation_override = 1e7;
    return p;
  }();
  std::vector<double> q_grid = log_grid(1e4, 1e12, 200);
  std::vector<double> recoil_values{1e26, 1e23};
  std::vector<double> eta_values{0.0, 0.3};
  /// Q = omega_ref / gamma with omega_ref = omega1.
  bool q_relative_to_omega1{true};
};

/// Rates for a quality factor: gamma = lambda = omega_ref / Q.
NoiseRates rates_for_quality(const PhysicalParams& p, double q, double recoil, bool relative_to_omega1);

struct ZetaResult {
  double asymptotic{};  // protocol fixed point (position limit when pp diverges)
  double one_cycle{};   // one cycle from the omega2 steady state
  double initial{};     // omega2 steady state itself
};

/// Squeezing ratios at one quality factor.
ZetaResult zeta_at(const PhysicalParams& p, double q, double recoil, double eta, bool relative_to_omega1 = true);

Dataset fig4a_noise(const Fig4Options& o = {});
Dataset fig4b_zeta(const Fig4Options& o = {});

struct ScenarioOptions {
  PhysicalParams base = [] {
    PhysicalParams p;
    p.mean_occupation_override = 1e7;
    return p;
  }();
  double gamma{1e-6};
  double best_recoil{1e23};
  double worst_recoil{1e26};
};

Dataset scenario_table(const ScenarioOptions& o = {});

/// Known figure ids: fig2 fig3a fig3b fig3c fig4a fig4b scenario.
const std::vector<std::string>& figure_ids();

/// Runs a figure with defaults, letting `cfg` override the parameters that
/// apply to it (natural coefficients for figs 2-3, physical params for fig 4
/// and the scenario table). The seed is recorded in the metadata.
Dataset run_figure(const std::string& id, const RunConfig& cfg, bool cfg_given, std::uint64_t seed);

/// One-line human summary built from the dataset metadata.
std::string summary_line(const Dataset& d);

}  // namespace levisqueeze
