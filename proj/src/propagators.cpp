#include "levisqueeze/propagators.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>

#include "levisqueeze/parallel.hpp"

namespace levisqueeze {

namespace {

bool is_zero(const SymMat2& s) { return s.xx == 0.0 && s.xp == 0.0 && s.pp == 0.0; }

// Scale-free singularity measure shared with mat2_inverse.
bool near_singular(const SymMat2& s, double rel) {
  const double scale = std::abs(s.xx * s.pp) + s.xp * s.xp;
  return scale == 0.0 || std::abs(s.det()) <= rel * scale;
}

double relative_residual(const SymMat2& r, const SymMat2& ref) {
  // Component-wise relative to the diagonal scales so SI units do not matter.
  const double sx = std::abs(ref.xx);
  const double sp = std::abs(ref.pp);
  const double sxp = std::sqrt(sx * sp);
  double out = 0.0;
  if (sx > 0.0) out = std::max(out, std::abs(r.xx) / sx);
  if (sp > 0.0) out = std::max(out, std::abs(r.pp) / sp);
  if (sxp > 0.0) out = std::max(out, std::abs(r.xp) / sxp);
  return out;
}

std::size_t step_count(double t, double dt) {
  return static_cast<std::size_t>(std::max(1.0, std::ceil(t / dt - 1e-9)));
}

constexpr double kDeltaSingular = 1e-12;
constexpr double kDeltaShift = 1e-9;

}  // namespace

LyapunovFlow::LyapunovFlow(const Mat2& a, const SymMat2& d) : a_(a), d_(d) {
  try {
    x_ = solve_lyapunov_general(a, d);
  } catch (const NumericalError&) {
    x_.reset();
  }
}

PropagationResult LyapunovFlow::propagate_detailed(const SymMat2& sigma0, double t) const {
  PropagationResult r;
  r.state.time = t;
  if (t == 0.0) {
    r.state.cov = sigma0;
    r.diagnostics.branch_used = "identity";
    return r;
  }
  const Mat2 e = mat2_exp(a_, t);
  // e^{tA}(sigma0 - X)e^{tA^T} + X written as e^{tA} sigma0 e^{tA^T} + W(t),
  // with W integrated directly: no cancellation against a huge X.
  if (is_zero(d_)) {
    r.state.cov = congruence(e, sigma0);
    r.diagnostics.branch_used = "congruence";
    return r;
  }
  r.state.cov = congruence(e, sigma0) + lyapunov_increment(a_, d_, t);
  r.diagnostics.branch_used = "closed-form";
  if (x_) r.diagnostics.residual = relative_residual(lyapunov_operator(a_, *x_) + d_, *x_);
  return r;
}

SymMat2 LyapunovFlow::propagate(const SymMat2& sigma0, double t) const {
  return propagate_detailed(sigma0, t).state.cov;
}

RiccatiFlow::RiccatiFlow(const Mat2& a, const SymMat2& d, const Mat2& b) : a_(a), d_(d), g_(gram(b)) {
  measured_ = !is_zero(g_);
  if (!measured_) {
    lyapunov_.emplace(a, d);
    return;
  }
  auto make = [&](CareBranch branch) -> std::optional<Pair> {
    try {
      Pair p;
      p.x1 = solve_care_gram(a, d, g_, branch);
      p.script_a = a - p.x1.full() * g_.full();
      p.x2 = solve_x2_gram(p.script_a, g_);
      if (!p.x2.is_finite() || near_singular(p.x2, tol::kSingularRelative)) return std::nullopt;
      return p;
    } catch (const NumericalError&) {
      return std::nullopt;
    }
  };
  stab_ = make(CareBranch::Stabilizing);
  anti_ = make(CareBranch::AntiStabilizing);
  if (!stab_ && !anti_) {
    throw NumericalError(ErrorCode::NoStabilizingSolution, "no characteristic pair for the measured flow");
  }
}

std::optional<SymMat2> RiccatiFlow::from_pair(const Pair& pair, const SymMat2& sigma0, double t) const {
  const SymMat2 offset = sigma0 - pair.x1;
  if (is_zero(offset)) return pair.x1;
  if (is_hurwitz(pair.script_a)) {
    // Here delta_t grows and inverting it loses the slow direction when the
    // decay rates differ a lot. Rewrite sigma - X1 = P (I + W P)^{-1} with
    // the outer factors e^{t script_a} and W = E^T X2 E - X2 >= 0:
    // no inverse of delta is needed and a singular offset is fine.
    try {
      const Mat2 e = mat2_exp(pair.script_a, t);
      const SymMat2 w = congruence(e.transposed(), pair.x2) - pair.x2;
      const Mat2 core = offset.full() * mat2_inverse(Mat2::identity() + w.full() * offset.full());
      const SymMat2 sym{core.m11, 0.5 * (core.m12 + core.m21), core.m22};
      const SymMat2 out = pair.x1 + congruence(e, sym);
      if (out.is_finite()) return out;
    } catch (const NumericalError&) {
    }
    return std::nullopt;
  }
  if (near_singular(offset, kDeltaSingular)) return std::nullopt;
  try {
    const SymMat2 delta0 = sym_inverse(offset);
    const Mat2 e = mat2_exp(-1.0 * pair.script_a.transposed(), t);
    const SymMat2 delta_t = pair.x2 + congruence(e, delta0 - pair.x2);
    if (!delta_t.is_finite()) return std::nullopt;
    const SymMat2 out = pair.x1 + sym_inverse(delta_t);
    if (!out.is_finite()) return std::nullopt;
    return out;
  } catch (const NumericalError&) {
    return std::nullopt;
  }
}

PropagationResult RiccatiFlow::propagate_detailed(const SymMat2& sigma0, double t) const {
  if (!measured_) {
    auto r = lyapunov_->propagate_detailed(sigma0, t);
    if (r.diagnostics.branch_used == "closed-form") r.diagnostics.branch_used = "lyapunov";
    return r;
  }
  PropagationResult r;
  r.state.time = t;
  if (t == 0.0) {
    r.state.cov = sigma0;
    r.diagnostics.branch_used = "identity";
    return r;
  }

  auto attempt = [&](const SymMat2& s0) -> bool {
    if (stab_) {
      if (auto v = from_pair(*stab_, s0, t)) {
        r.state.cov = *v;
        r.diagnostics.branch_used = "stabilizing";
        r.diagnostics.residual = relative_residual(care_residual(a_, d_, g_, stab_->x1), stab_->x1);
        return true;
      }
    }
    if (anti_) {
      if (auto v = from_pair(*anti_, s0, t)) {
        r.state.cov = *v;
        r.diagnostics.branch_used = "anti-stabilizing";
        r.diagnostics.residual = relative_residual(care_residual(a_, d_, g_, anti_->x1), anti_->x1);
        return true;
      }
    }
    return false;
  };

  if (attempt(sigma0)) return r;

  const SymMat2& ref = stab_ ? stab_->x1 : anti_->x1;
  const double sx = sigma0.xx != 0.0 ? std::abs(sigma0.xx) : std::abs(ref.xx);
  const double sp = sigma0.pp != 0.0 ? std::abs(sigma0.pp) : std::abs(ref.pp);
  const SymMat2 shifted = sigma0 + SymMat2::diag(kDeltaShift * sx, kDeltaShift * sp);
  if (attempt(shifted)) {
    r.diagnostics.perturbation = kDeltaShift;
    r.diagnostics.branch_used += "+shifted";
    return r;
  }
  throw NumericalError(ErrorCode::SingularDeltaInversion, "sigma0 - X1 is not invertible for either pair");
}

SymMat2 RiccatiFlow::propagate(const SymMat2& sigma0, double t) const {
  return propagate_detailed(sigma0, t).state.cov;
}

SymMat2 RiccatiFlow::asymptote() const {
  if (!measured_) return solve_lyapunov(a_, d_);
  if (!stab_) throw NumericalError(ErrorCode::NoStabilizingSolution, "no stabilizing solution");
  return stab_->x1;
}

SymMat2 lyapunov_propagate(const SymMat2& sigma0, const Mat2& a, const SymMat2& d, double t) {
  return LyapunovFlow(a, d).propagate(sigma0, t);
}

SymMat2 lyapunov_asymptote(const Mat2& a, const SymMat2& d) { return solve_lyapunov(a, d); }

SymMat2 riccati_propagate(const SymMat2& sigma0, const Mat2& a, const SymMat2& d, const Mat2& b, double t) {
  return RiccatiFlow(a, d, b).propagate(sigma0, t);
}

SymMat2 riccati_asymptote(const Mat2& a, const SymMat2& d, const Mat2& b) {
  return RiccatiFlow(a, d, b).asymptote();
}

SymMat2 riccati_asymptote_from_pair(const Mat2& a, const SymMat2& d, const Mat2& b) {
  const SymMat2 g = gram(b);
  if (is_zero(g)) return solve_lyapunov(a, d);
  const SymMat2 x1 = solve_care_gram(a, d, g, CareBranch::AntiStabilizing);
  const SymMat2 x2 = solve_x2_gram(a - x1.full() * g.full(), g);
  return x1 + sym_inverse(x2);
}

SymMat2 riccati_rhs(const Mat2& a, const SymMat2& d, const SymMat2& bbt, const SymMat2& s) {
  return lyapunov_operator(a, s) + d - sandwich(s, bbt);
}

std::vector<SymMat2> ode_oracle_path(const SymMat2& sigma0, const Mat2& a, const SymMat2& d, const Mat2& b,
                                     double t, double dt) {
  if (!(dt > 0.0) || !(t >= 0.0) || !std::isfinite(t)) {
    throw NumericalError(ErrorCode::InvalidParameters, "oracle needs dt > 0 and finite t >= 0");
  }
  const auto sc = DiagonalScaling::for_drift(a);
  const Mat2 ab = sc.similar(a);
  if (dt * frobenius_norm(ab) > 0.1) {
    throw NumericalError(ErrorCode::StepTooLarge, "dt * |A| exceeds 0.1");
  }
  const SymMat2 db = sc.shrink(d);
  const SymMat2 gb = sc.grow(gram(b));

  std::vector<SymMat2> path;
  path.push_back(sigma0);
  if (t == 0.0) return path;

  const std::size_t n = step_count(t, dt);
  const double h = t / static_cast<double>(n);
  path.reserve(n + 1);
  SymMat2 s = sc.shrink(sigma0);
  auto f = [&](const SymMat2& x) { return riccati_rhs(ab, db, gb, x); };
  for (std::size_t i = 0; i < n; ++i) {
    const SymMat2 k1 = f(s);
    const SymMat2 k2 = f(s + (0.5 * h) * k1);
    const SymMat2 k3 = f(s + (0.5 * h) * k2);
    const SymMat2 k4 = f(s + h * k3);
    s = s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    path.push_back(sc.grow(s));
  }
  return path;
}

SymMat2 ode_oracle(const SymMat2& sigma0, const Mat2& a, const SymMat2& d, const Mat2& b, double t, double dt) {
  return ode_oracle_path(sigma0, a, d, b, t, dt).back();
}

double default_oracle_step(const SymMat2& sigma0, const Mat2& a, const Mat2& b) {
  const auto sc = DiagonalScaling::for_drift(a);
  const Mat2 ab = sc.similar(a);
  const double freq = std::max(frobenius_norm(ab), 1e-300);
  const double damping = std::max(std::abs(ab.m11), std::abs(ab.m22));
  const double contraction = frobenius_norm(sc.grow(gram(b))) * frobenius_norm(sc.shrink(sigma0));
  double dt = 6.283185307179586 / freq;
  const double rate = std::max(damping, contraction);
  if (rate > 0.0) dt = std::min(dt, 1.0 / rate);
  return dt / 2000.0;
}

GaussianState conditional_mean_step(const GaussianState& state, const Mat2& a, const SymMat2& d, const Mat2& b,
                                    double dw, double dt) {
  if (!(dt > 0.0)) throw NumericalError(ErrorCode::InvalidParameters, "dt must be positive");
  if (b.m11 != 0.0 || b.m21 != 0.0) {
    throw NumericalError(ErrorCode::InvalidParameters, "backaction must act through its second column only");
  }
  const SymMat2& s = state.cov;
  const Vec2 gain{s.xx * b.m12 + s.xp * b.m22, s.xp * b.m12 + s.pp * b.m22};
  GaussianState next;
  next.mean = state.mean + dt * (a * state.mean) + dw * gain;
  next.cov = riccati_propagate(s, a, d, b, dt);
  next.time = state.time + dt;
  return next;
}

namespace {

std::mt19937_64 stream_for(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

struct CovariancePath {
  double h{};
  std::vector<SymMat2> cov;   // cov[k] at t = k h
  std::vector<Vec2> gain;     // sigma B column at t = k h
};

CovariancePath covariance_path(const SymMat2& cov0, const Mat2& a, const SymMat2& d, const Mat2& b, double t,
                               double dt) {
  if (b.m11 != 0.0 || b.m21 != 0.0) {
    throw NumericalError(ErrorCode::InvalidParameters, "backaction must act through its second column only");
  }
  const RiccatiFlow flow(a, d, b);
  const std::size_t n = step_count(t, dt);
  CovariancePath p;
  p.h = t / static_cast<double>(n);
  p.cov.reserve(n + 1);
  p.cov.push_back(cov0);
  for (std::size_t k = 0; k < n; ++k) p.cov.push_back(flow.propagate(p.cov.back(), p.h));
  for (const auto& s : p.cov) p.gain.push_back({s.xx * b.m12 + s.xp * b.m22, s.xp * b.m12 + s.pp * b.m22});
  return p;
}

}  // namespace

std::vector<GaussianState> simulate_trajectory(const GaussianState& initial, const Mat2& a, const SymMat2& d,
                                               const Mat2& b, double t, double dt, std::uint64_t seed,
                                               std::uint64_t index) {
  const auto path = covariance_path(initial.cov, a, d, b, t, dt);
  auto rng = stream_for(seed, index);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sqrt_h = std::sqrt(path.h);

  std::vector<GaussianState> out;
  out.reserve(path.cov.size());
  GaussianState s = initial;
  out.push_back(s);
  for (std::size_t k = 0; k + 1 < path.cov.size(); ++k) {
    const double dw = sqrt_h * normal(rng);
    s.mean = s.mean + path.h * (a * s.mean) + dw * path.gain[k];
    s.cov = path.cov[k + 1];
    s.time = initial.time + static_cast<double>(k + 1) * path.h;
    out.push_back(s);
  }
  return out;
}

EnsembleSummary simulate_ensemble(const GaussianState& initial, const Mat2& a, const SymMat2& d, const Mat2& b,
                                  const EnsembleOptions& options) {
  if (options.trajectories < 2) throw NumericalError(ErrorCode::InvalidParameters, "need at least two trajectories");
  const auto path = covariance_path(initial.cov, a, d, b, options.t, options.dt);
  const double sqrt_h = std::sqrt(path.h);

  const auto finals = parallel_map(
      options.trajectories,
      [&](std::size_t i) {
        auto rng = stream_for(options.seed, i);
        std::normal_distribution<double> normal(0.0, 1.0);
        Vec2 mean = initial.mean;
        for (std::size_t k = 0; k + 1 < path.cov.size(); ++k) {
          const double dw = sqrt_h * normal(rng);
          mean = mean + path.h * (a * mean) + dw * path.gain[k];
        }
        return mean;
      },
      options.threads);

  const double n = static_cast<double>(finals.size());
  Vec2 avg{};
  for (const auto& m : finals) avg = avg + (1.0 / n) * m;
  SymMat2 cov{};
  for (const auto& m : finals) {
    const Vec2 c = m - avg;
    cov = cov + SymMat2{c.x * c.x, c.x * c.p, c.p * c.p};
  }

  EnsembleSummary out;
  out.trajectories = finals.size();
  out.time = initial.time + options.t;
  out.mean_of_means = avg;
  out.covariance_of_means = (1.0 / (n - 1.0)) * cov;
  out.conditional_cov = path.cov.back();
  out.seed = options.seed;
  return out;
}

void write_trajectory_csv(std::ostream& out, const std::vector<GaussianState>& path, std::uint64_t seed) {
  out << "time,mean_x,mean_p,sxx,sxp,spp,seed\n";
  char buf[256];
  for (const auto& s : path) {
    std::snprintf(buf, sizeof buf, "%.12e,%.12e,%.12e,%.12e,%.12e,%.12e,", s.time, s.mean.x, s.mean.p, s.cov.xx,
                  s.cov.xp, s.cov.pp);
    out << buf << seed << '\n';
  }
}

}  // namespace levisqueeze
