#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "levisqueeze/linalg.hpp"

namespace levisqueeze {

struct GaussianState {
  Vec2 mean;
  SymMat2 cov;
  double time{0.0};
};

struct Diagnostics {
  double residual{0.0};
  std::string branch_used;
  long step_count{0};
  /// Size of the diagonal shift applied to the initial covariance when the
  /// closed form needed an inverse that did not exist (0 when untouched).
  double perturbation{0.0};
};

struct PropagationResult {
  GaussianState state;
  Diagnostics diagnostics;
};

/// Unconditional covariance flow for a fixed (A, D). Precomputes the steady
/// state so repeated propagation costs one 2x2 exponential.
class LyapunovFlow {
 public:
  LyapunovFlow(const Mat2& a, const SymMat2& d);

  SymMat2 propagate(const SymMat2& sigma0, double t) const;
  PropagationResult propagate_detailed(const SymMat2& sigma0, double t) const;

  /// Steady state X when the Lyapunov operator is invertible.
  const std::optional<SymMat2>& steady_state() const { return x_; }
  const Mat2& a() const { return a_; }
  const SymMat2& d() const { return d_; }

 private:
  Mat2 a_;
  SymMat2 d_;
  std::optional<SymMat2> x_;
};

/// Conditional covariance flow under continuous measurement. Uses
/// delta = (sigma - X1)^{-1}, which obeys a linear equation with drift built
/// from script_a = A - X1 B B^T. Both the stabilizing and the anti-stabilizing
/// characteristic pair are prepared; propagation picks whichever gives a
/// well-conditioned initial delta.
class RiccatiFlow {
 public:
  RiccatiFlow(const Mat2& a, const SymMat2& d, const Mat2& b);

  SymMat2 propagate(const SymMat2& sigma0, double t) const;
  PropagationResult propagate_detailed(const SymMat2& sigma0, double t) const;

  /// sigma_infinity. With measurement this is the stabilizing root X1, which
  /// equals X1' + X2'^{-1} built from the anti-stabilizing pair.
  SymMat2 asymptote() const;
  bool measured() const { return measured_; }

  struct Pair {
    SymMat2 x1;
    SymMat2 x2;
    Mat2 script_a;
  };
  const std::optional<Pair>& stabilizing() const { return stab_; }
  const std::optional<Pair>& anti_stabilizing() const { return anti_; }

 private:
  std::optional<SymMat2> from_pair(const Pair& pair, const SymMat2& sigma0, double t) const;

  Mat2 a_;
  SymMat2 d_;
  SymMat2 g_;
  bool measured_{false};
  std::optional<LyapunovFlow> lyapunov_;
  std::optional<Pair> stab_;
  std::optional<Pair> anti_;
};

/// sigma_t = e^{tA}(sigma0 - X)e^{tA^T} + X. Non-Hurwitz drifts use the same
/// form when the steady state exists, the pure congruence when D = 0, and the
/// RK4 oracle otherwise.
SymMat2 lyapunov_propagate(const SymMat2& sigma0, const Mat2& a, const SymMat2& d, double t);
SymMat2 lyapunov_asymptote(const Mat2& a, const SymMat2& d);

SymMat2 riccati_propagate(const SymMat2& sigma0, const Mat2& a, const SymMat2& d, const Mat2& b, double t);
SymMat2 riccati_asymptote(const Mat2& a, const SymMat2& d, const Mat2& b);

/// X1 + X2^{-1} evaluated from the anti-stabilizing pair. Equals
/// riccati_asymptote; kept as an independent route for checks.
SymMat2 riccati_asymptote_from_pair(const Mat2& a, const SymMat2& d, const Mat2& b);

/// Right-hand side of the covariance equation, A s + s A^T + D - s B B^T s.
SymMat2 riccati_rhs(const Mat2& a, const SymMat2& d, const SymMat2& bbt, const SymMat2& s);

/// Fixed-step classic RK4 on (xx, xp, pp), carried out in the balanced frame
/// of A. Throws StepTooLarge when dt * |A| exceeds 0.1 in that frame.
SymMat2 ode_oracle(const SymMat2& sigma0, const Mat2& a, const SymMat2& d, const Mat2& b, double t, double dt);
/// Dense variant: the state after every step, starting with sigma0.
std::vector<SymMat2> ode_oracle_path(const SymMat2& sigma0, const Mat2& a, const SymMat2& d, const Mat2& b,
                                     double t, double dt);

/// (1/2000) min(2 pi / omega, 1 / max(a2, b^2 sigma_xx)) in the balanced frame.
double default_oracle_step(const SymMat2& sigma0, const Mat2& a, const Mat2& b);

/// One Euler-Maruyama step of the conditional mean with the covariance moved
/// by the exact Riccati flow. The mean receives the innovation kick sigma B dW
/// where only the second column of B is nonzero.
GaussianState conditional_mean_step(const GaussianState& state, const Mat2& a, const SymMat2& d, const Mat2& b,
                                    double dw, double dt);

struct EnsembleSummary {
  std::size_t trajectories{0};
  double time{0.0};
  Vec2 mean_of_means;
  SymMat2 covariance_of_means;
  SymMat2 conditional_cov;
  std::uint64_t seed{0};
};

struct EnsembleOptions {
  std::size_t trajectories{10000};
  double t{1.0};
  double dt{1e-3};
  std::uint64_t seed{0};
  unsigned threads{0};  // 0: use the default pool size
};

/// Monte Carlo over conditional trajectories starting from `initial`.
EnsembleSummary simulate_ensemble(const GaussianState& initial, const Mat2& a, const SymMat2& d, const Mat2& b,
                                  const EnsembleOptions& options);

/// One sampled trajectory, every step.
std::vector<GaussianState> simulate_trajectory(const GaussianState& initial, const Mat2& a, const SymMat2& d,
                                               const Mat2& b, double t, double dt, std::uint64_t seed,
                                               std::uint64_t index = 0);

/// Header `time,mean_x,mean_p,sxx,sxp,spp,seed`.
void write_trajectory_csv(std::ostream& out, const std::vector<GaussianState>& path, std::uint64_t seed);

}  // namespace levisqueeze
