#pragma once

#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include "levisqueeze/noise_model.hpp"
#include "levisqueeze/propagators.hpp"

namespace levisqueeze {

/// Two-frequency switching schedule: hold omega1 for t1, then omega2 for t2.
struct ProtocolSchedule {
  double omega1{};
  double omega2{};
  double big_omega1{};  // sqrt(omega1^2 - (a1 - a2)^2 / 4)
  double big_omega2{};
  double t1{};          // pi / (2 big_omega1)
  double t2{};
  int cycles{0};

  double period() const { return t1 + t2; }
};

/// Throws Overdamped unless omega_i > |a1 - a2| / 2 for both segments, and
/// InvalidParameters unless omega1 < omega2 and the damping agrees between
/// the two coefficient sets.
ProtocolSchedule build_schedule(const DynamicsCoefficients& c1, const DynamicsCoefficients& c2, int cycles);

/// Zero-noise cycle: xx -> (omega1/omega2)^2 xx, pp -> (omega2/omega1)^2 pp,
/// xp unchanged.
SymMat2 unitary_cycle(const SymMat2& sigma0, double omega1, double omega2);

enum class MapKind { Langevin, Riccati };

/// One protocol cycle S2 o S1. The Langevin part is always present as the
/// exact affine map sigma -> F sigma F^T + G. With measurement the map is
/// applied through the closed-form Riccati flows of both segments.
class CycleMap {
 public:
  CycleMap(const DynamicsCoefficients& c1, const DynamicsCoefficients& c2, const ProtocolSchedule& sched,
           MapKind kind);

  MapKind kind() const { return kind_; }
  const Mat2& f() const { return f_; }
  const SymMat2& affine() const { return g_; }
  /// e^{t2 A2}, the second-segment propagator.
  const Mat2& e2() const { return e2_; }
  /// Lyapunov steady states of the two segments when they exist.
  const std::optional<SymMat2>& x_first() const { return x1_; }
  const std::optional<SymMat2>& x_second() const { return x2_; }
  const ProtocolSchedule& schedule() const { return sched_; }
  bool measured() const { return measured_; }

  SymMat2 apply(const SymMat2& sigma) const;
  /// State after the first segment only.
  SymMat2 apply_first(const SymMat2& sigma) const;
  SymMat2 apply_second(const SymMat2& sigma) const;
  /// State at time s in [0, t1 + t2] within the cycle.
  SymMat2 apply_partial(const SymMat2& sigma, double s) const;

  /// Steady state of the second segment's measured (or unmeasured) flow.
  SymMat2 second_asymptote() const;
  /// Holds omega2 for time t (pre-protocol equilibration). Unmeasured unless
  /// `measured` is set.
  SymMat2 equilibrate(const SymMat2& sigma, double t, bool measured = false) const;

 private:
  MapKind kind_;
  ProtocolSchedule sched_;
  bool measured_{false};
  Mat2 f_;
  Mat2 e2_;
  SymMat2 g_;
  std::optional<SymMat2> x1_;
  std::optional<SymMat2> x2_;
  std::shared_ptr<const RiccatiFlow> flow1_;
  std::shared_ptr<const RiccatiFlow> flow2_;
  std::shared_ptr<const RiccatiFlow> free2_;
};

CycleMap cycle_map(const DynamicsCoefficients& c1, const DynamicsCoefficients& c2, const ProtocolSchedule& sched,
                   MapKind kind);

/// Reported instead of a state when the cycle map has no attracting fixed
/// point. When F is lower triangular with |F11| < 1 the position variance
/// still settles; `xx_limit` then holds its limit.
struct Divergent {
  double spectral_radius{};
  std::optional<double> xx_limit;
};

using AsymptoteResult = std::variant<SymMat2, Divergent>;

struct AsymptoteOptions {
  double tolerance{1e-12};
  long max_iterations{100000};
  /// Receives the Riccati iteration count when set.
  long* iterations{nullptr};
};

/// Langevin kind: closed form from sigma - F sigma F^T = G, Divergent iff
/// rho(F) >= 1. Riccati kind: fixed-point iteration of the cycle map started
/// from the measured steady state at omega2; NonConverged after
/// max_iterations.
AsymptoteResult protocol_asymptote(const CycleMap& map, const AsymptoteOptions& options = {});

/// The Langevin fixed point from the direct equation sigma - F sigma F^T = G.
SymMat2 langevin_asymptote_direct(const CycleMap& map);
/// The same point as X_first - alpha with
/// alpha - F alpha F^T = dX - E2 dX E2^T and dX = X_first - X_second.
/// Loses relative accuracy when X_first is far above the answer.
SymMat2 langevin_asymptote_alpha(const CycleMap& map);

/// Position-variance limit of the Langevin map: G_xx / (1 - F11^2) when F12
/// vanishes (which the quarter-period schedule guarantees) and F11^2 < 1.
std::optional<double> langevin_xx_limit(const CycleMap& map);

struct SqueezeRates {
  double sr_xx{};
  double sr_pp{};
  double sr_xp{};
  double f{};
  double delta_a{};
  /// True when the negative-f convention reproduces the diffusion-free cycle
  /// map better than the positive one on this input.
  bool negative_sign_matches{true};
};

enum class DampingSign { Negative, Positive };

/// Per-cycle log factors of the diffusion-free map. `sigma_ref` supplies the
/// ratios sigma_xp/sigma_pp and sigma_xx/sigma_pp. sr_xp is NaN when the
/// logarithm's argument is not positive.
SqueezeRates squeeze_rates(const DynamicsCoefficients& c1, const DynamicsCoefficients& c2,
                           const ProtocolSchedule& sched, const SymMat2& sigma_ref,
                           DampingSign sign = DampingSign::Negative);

/// Leading-order momentum rate, exact at a1 = a2:
/// -pi (a1 + a2)(W1 + W2)/(2 W1 W2) + ln(W2^2 / W1^2).
double momentum_rate_leading(const DynamicsCoefficients& c1, const ProtocolSchedule& sched);

/// Ground-state position variance hbar / (2 m omega).
double ground_state_variance(double omega, double m, double hbar);

/// zeta = sqrt(sigma_xx / sigma_g) with sigma_g at omega_ref.
double squeezing_ratio(const SymMat2& sigma, double omega_ref, double m, double hbar);

enum class SqueezeClass { Squeezed, Squashed, Neither };

/// Squeezed below 1; squashed in [1, zeta_initial) where zeta_initial is the
/// ratio of the pre-protocol state.
SqueezeClass classify(double zeta, double zeta_initial);
const char* to_string(SqueezeClass c);

struct TracePoint {
  double time{};
  int cycle{};  // completed cycles; -1 during equilibration
  SymMat2 cov;
};

struct ProtocolRunOptions {
  double equilibration_time{0.0};
  /// Extra samples inside each segment (0: cycle boundaries only).
  int dense_samples{0};
  /// Keep the detector on during equilibration too.
  bool measured_equilibration{false};
};

/// Equilibrates at omega2 from sigma0, then runs sched.cycles protocol cycles.
std::vector<TracePoint> run_protocol(const CycleMap& map, const SymMat2& sigma0,
                                     const ProtocolRunOptions& options = {});

}  // namespace levisqueeze
