#include "levisqueeze/protocol.hpp"

#include <cmath>

namespace levisqueeze {

using constants::kPi;

namespace {

double big_omega(double omega, double a1, double a2) {
  const double half = 0.5 * (a1 - a2);
  const double sq = omega * omega - half * half;
  if (!(omega > std::abs(half)) || !(sq > 0.0)) {
    throw NumericalError(ErrorCode::Overdamped, "trap frequency does not exceed |a1 - a2| / 2");
  }
  return std::sqrt(sq);
}

// Largest relative change, each entry measured against its own scale.
double relative_change(const SymMat2& next, const SymMat2& prev) {
  const double sx = std::abs(prev.xx);
  const double sp = std::abs(prev.pp);
  const double sxp = std::sqrt(sx * sp);
  double r = 0.0;
  r = std::max(r, sx > 0.0 ? std::abs(next.xx - prev.xx) / sx : std::abs(next.xx));
  r = std::max(r, sp > 0.0 ? std::abs(next.pp - prev.pp) / sp : std::abs(next.pp));
  r = std::max(r, sxp > 0.0 ? std::abs(next.xp - prev.xp) / sxp : std::abs(next.xp));
  return r;
}

}  // namespace

ProtocolSchedule build_schedule(const DynamicsCoefficients& c1, const DynamicsCoefficients& c2, int cycles) {
  if (cycles < 0) throw NumericalError(ErrorCode::InvalidParameters, "cycle count must be >= 0");
  if (!(c1.omega > 0.0 && c1.omega < c2.omega)) {
    throw NumericalError(ErrorCode::InvalidParameters, "need 0 < omega1 < omega2");
  }
  ProtocolSchedule s;
  s.omega1 = c1.omega;
  s.omega2 = c2.omega;
  s.big_omega1 = big_omega(c1.omega, c1.a1, c1.a2);
  s.big_omega2 = big_omega(c2.omega, c2.a1, c2.a2);
  s.t1 = kPi / (2.0 * s.big_omega1);
  s.t2 = kPi / (2.0 * s.big_omega2);
  s.cycles = cycles;
  return s;
}

SymMat2 unitary_cycle(const SymMat2& sigma0, double omega1, double omega2) {
  if (!(omega1 > 0.0 && omega2 > 0.0)) {
    throw NumericalError(ErrorCode::InvalidParameters, "trap frequencies must be positive");
  }
  const double er = omega1 / omega2;
  return congruence(Mat2::diag(-er, -1.0 / er), sigma0);
}

CycleMap::CycleMap(const DynamicsCoefficients& c1, const DynamicsCoefficients& c2, const ProtocolSchedule& sched,
                   MapKind kind)
    : kind_(kind), sched_(sched) {
  const auto m1 = build_matrices(c1);
  const auto m2 = build_matrices(c2);
  const Mat2 e1 = mat2_exp(m1.a, sched.t1);
  e2_ = mat2_exp(m2.a, sched.t2);
  f_ = e2_ * e1;

  const LyapunovFlow l1(m1.a, m1.d);
  const LyapunovFlow l2(m2.a, m2.d);
  g_ = l2.propagate(l1.propagate(SymMat2::zero(), sched.t1), sched.t2);
  x1_ = l1.steady_state();
  x2_ = l2.steady_state();

  measured_ = kind == MapKind::Riccati && (c1.b != 0.0 || c2.b != 0.0);
  const Mat2 b1 = measured_ ? m1.b : Mat2::zero();
  const Mat2 b2 = measured_ ? m2.b : Mat2::zero();
  flow1_ = std::make_shared<const RiccatiFlow>(m1.a, m1.d, b1);
  flow2_ = std::make_shared<const RiccatiFlow>(m2.a, m2.d, b2);
  free2_ = measured_ ? std::make_shared<const RiccatiFlow>(m2.a, m2.d, Mat2::zero()) : flow2_;
}

SymMat2 CycleMap::apply_first(const SymMat2& sigma) const { return flow1_->propagate(sigma, sched_.t1); }
SymMat2 CycleMap::apply_second(const SymMat2& sigma) const { return flow2_->propagate(sigma, sched_.t2); }

SymMat2 CycleMap::apply(const SymMat2& sigma) const {
  if (!measured_) return congruence(f_, sigma) + g_;
  return apply_second(apply_first(sigma));
}

SymMat2 CycleMap::apply_partial(const SymMat2& sigma, double s) const {
  if (s <= sched_.t1) return flow1_->propagate(sigma, s);
  const double rest = std::min(s - sched_.t1, sched_.t2);
  return flow2_->propagate(apply_first(sigma), rest);
}

SymMat2 CycleMap::second_asymptote() const { return flow2_->asymptote(); }

SymMat2 CycleMap::equilibrate(const SymMat2& sigma, double t, bool measured) const {
  return (measured ? flow2_ : free2_)->propagate(sigma, t);
}

CycleMap cycle_map(const DynamicsCoefficients& c1, const DynamicsCoefficients& c2, const ProtocolSchedule& sched,
                   MapKind kind) {
  return CycleMap(c1, c2, sched, kind);
}

std::optional<double> langevin_xx_limit(const CycleMap& map) {
  const Mat2& f = map.f();
  const double scale = std::abs(f.m11) + std::abs(f.m22);
  // F12 vanishes for quarter-period segments up to rounding. Its units are
  // those of e2's (1,2) entry, roughly 1/(m Omega2), which sets the yardstick.
  // (Balancing F instead would blow a rounding-level F12 up to sqrt|F12 F21|.)
  const double unit = std::abs(map.e2().m12);
  if (scale == 0.0 || unit == 0.0 || std::abs(f.m12) > 1e-9 * unit * scale) return std::nullopt;
  const double c = f.m11 * f.m11;
  if (!(c < 1.0)) return std::nullopt;
  return map.affine().xx / (1.0 - c);
}

SymMat2 langevin_asymptote_direct(const CycleMap& map) {
  return solve_discrete_sylvester(map.f(), map.affine());
}

SymMat2 langevin_asymptote_alpha(const CycleMap& map) {
  if (!map.x_first() || !map.x_second()) {
    throw NumericalError(ErrorCode::SingularMatrix, "segment steady states do not exist");
  }
  const SymMat2 dx = *map.x_first() - *map.x_second();
  const SymMat2 rhs = dx - congruence(map.e2(), dx);
  return *map.x_first() - solve_discrete_sylvester(map.f(), rhs);
}

namespace {

AsymptoteResult langevin_asymptote(const CycleMap& map) {
  const double rho = spectral_radius(map.f());
  if (!(rho < 1.0)) return Divergent{rho, langevin_xx_limit(map)};
  // The direct equation keeps full relative accuracy; X1 - alpha cancels
  // badly once X1 is many orders above the answer (weak damping in SI).
  return langevin_asymptote_direct(map);
}

}  // namespace

AsymptoteResult protocol_asymptote(const CycleMap& map, const AsymptoteOptions& options) {
  if (!map.measured()) return langevin_asymptote(map);

  SymMat2 sigma = map.second_asymptote();
  for (long n = 1; n <= options.max_iterations; ++n) {
    const SymMat2 next = map.apply(sigma);
    if (!next.is_finite() || std::abs(next.xx) > 1e300 || std::abs(next.pp) > 1e300) {
      if (options.iterations) *options.iterations = n;
      return Divergent{std::numeric_limits<double>::infinity(), std::nullopt};
    }
    const double change = relative_change(next, sigma);
    sigma = next;
    if (change <= options.tolerance) {
      if (options.iterations) *options.iterations = n;
      return sigma;
    }
  }
  if (options.iterations) *options.iterations = options.max_iterations;
  throw NumericalError(ErrorCode::NonConverged, "measured protocol map did not reach a fixed point");
}

SqueezeRates squeeze_rates(const DynamicsCoefficients& c1, const DynamicsCoefficients& c2,
                           const ProtocolSchedule& sched, const SymMat2& sigma_ref, DampingSign sign) {
  const double w1 = sched.big_omega1;
  const double w2 = sched.big_omega2;
  const double a1 = c1.a1;
  const double a2 = c1.a2;
  const double m = c1.m;
  const double da = a2 - a1;
  const double magnitude = kPi * (a1 + a2) * (w1 + w2) / (2.0 * w1 * w2);

  auto rates_for = [&](double f) {
    SqueezeRates r;
    r.f = f;
    r.delta_a = da;
    r.sr_xx = f + std::log(w1 * w1 / (w2 * w2));
    const double spread = w2 * w2 - w1 * w1;
    double pp_arg = w2 * w2 / (w1 * w1);
    if (da != 0.0) {
      pp_arg += da * m * spread / (w1 * w1) * (sigma_ref.xp / sigma_ref.pp) +
                da * da * m * m * spread * spread / (4.0 * w1 * w1 * w2 * w2) * (sigma_ref.xx / sigma_ref.pp);
    }
    r.sr_pp = pp_arg > 0.0 ? f + std::log(pp_arg) : std::numeric_limits<double>::quiet_NaN();
    double xp_arg = 1.0;
    if (da != 0.0) xp_arg += da * m * spread / (2.0 * w2 * w2) * (sigma_ref.xx / sigma_ref.xp);
    r.sr_xp = xp_arg > 0.0 && std::isfinite(xp_arg) ? f + std::log(xp_arg) : std::numeric_limits<double>::quiet_NaN();
    return r;
  };

  const SqueezeRates neg = rates_for(-magnitude);
  const SqueezeRates pos = rates_for(magnitude);

  // Brute-force reference: the xx factor of the diffusion-free cycle map.
  const Mat2 f = mat2_exp(build_matrices(c2).a, sched.t2) * mat2_exp(build_matrices(c1).a, sched.t1);
  const double observed = std::log(f.m11 * f.m11);
  const bool neg_matches = std::abs(neg.sr_xx - observed) <= std::abs(pos.sr_xx - observed);

  SqueezeRates out = sign == DampingSign::Negative ? neg : pos;
  out.negative_sign_matches = neg_matches;
  return out;
}

double momentum_rate_leading(const DynamicsCoefficients& c1, const ProtocolSchedule& sched) {
  const double w1 = sched.big_omega1;
  const double w2 = sched.big_omega2;
  return -kPi * (c1.a1 + c1.a2) * (w1 + w2) / (2.0 * w1 * w2) + std::log(w2 * w2 / (w1 * w1));
}

double ground_state_variance(double omega, double m, double hbar) {
  if (!(omega > 0.0 && m > 0.0)) {
    throw NumericalError(ErrorCode::InvalidParameters, "ground state needs omega > 0 and m > 0");
  }
  return hbar / (2.0 * m * omega);
}

double squeezing_ratio(const SymMat2& sigma, double omega_ref, double m, double hbar) {
  return std::sqrt(sigma.xx / ground_state_variance(omega_ref, m, hbar));
}

SqueezeClass classify(double zeta, double zeta_initial) {
  if (zeta < 1.0) return SqueezeClass::Squeezed;
  if (zeta < zeta_initial) return SqueezeClass::Squashed;
  return SqueezeClass::Neither;
}

const char* to_string(SqueezeClass c) {
  switch (c) {
    case SqueezeClass::Squeezed: return "squeezed";
    case SqueezeClass::Squashed: return "squashed";
    case SqueezeClass::Neither: return "neither";
  }
  return "neither";
}

std::vector<TracePoint> run_protocol(const CycleMap& map, const SymMat2& sigma0, const ProtocolRunOptions& options) {
  std::vector<TracePoint> out;
  const auto& sched = map.schedule();
  const int dense = std::max(0, options.dense_samples);
  out.push_back({0.0, -1, sigma0});

  SymMat2 sigma = sigma0;
  double t = 0.0;
  if (options.equilibration_time > 0.0) {
    const int pieces = dense + 1;
    const double h = options.equilibration_time / pieces;
    for (int k = 1; k <= pieces; ++k) {
      out.push_back({h * k, k == pieces ? 0 : -1, map.equilibrate(sigma0, h * k, options.measured_equilibration)});
    }
    sigma = out.back().cov;
    t = options.equilibration_time;
  } else {
    out.back().cycle = 0;
  }

  const double tau = sched.period();
  for (int n = 1; n <= sched.cycles; ++n) {
    for (int k = 1; k <= dense; ++k) {
      const double s = tau * k / (dense + 1);
      out.push_back({t + s, n - 1, map.apply_partial(sigma, s)});
    }
    sigma = map.apply(sigma);
    t += tau;
    out.push_back({t, n, sigma});
  }
  return out;
}

}  // namespace levisqueeze
