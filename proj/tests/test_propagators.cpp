#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <algorithm>
#include <random>
#include <sstream>

#include "levisqueeze/errors.hpp"
#include "levisqueeze/noise_model.hpp"
#include "levisqueeze/propagators.hpp"
#include "oracles.hpp"

using namespace levisqueeze;
using doctest::Approx;

namespace {

const double kPi = std::acos(-1.0);

DynamicsMatrices fig3(double b, double omega = 1.5 * std::acos(-1.0)) {
  return build_matrices(natural_coefficients(1.0, 1.0, 0.5, 0.5, b, omega));
}

Eigen::Matrix2d gram_of(const Mat2& b) {
  const auto e = oracle::to_eigen(b);
  return e * e.transpose();
}

}  // namespace

TEST_CASE("lyapunov closed form against RK4 on random instances") {
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int n = 0; n < 200; ++n) {
    const auto r = oracle::random_instance(rng);
    const auto ref = oracle::rk4(oracle::to_eigen(r.sigma0), oracle::to_eigen(r.a), oracle::to_eigen(r.d),
                                 Eigen::Matrix2d::Zero(), {0.3, 1.0, 2.5}, 1e-4);
    const double ts[] = {0.3, 1.0, 2.5};
    for (int k = 0; k < 3; ++k)
      worst = std::max(worst, oracle::rel_diff(lyapunov_propagate(r.sigma0, r.a, r.d, ts[k]), ref[k]));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("riccati closed form against RK4 on random instances") {
  std::mt19937_64 rng(12);
  double worst = 0.0;
  for (int n = 0; n < 200; ++n) {
    const auto r = oracle::random_instance(rng);
    const auto ref = oracle::rk4(oracle::to_eigen(r.sigma0), oracle::to_eigen(r.a), oracle::to_eigen(r.d),
                                 gram_of(r.b), {0.3, 1.0, 2.5}, 2e-4);
    const double ts[] = {0.3, 1.0, 2.5};
    for (int k = 0; k < 3; ++k)
      worst = std::max(worst, oracle::rel_diff(riccati_propagate(r.sigma0, r.a, r.d, r.b, ts[k]), ref[k]));
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("semigroup and identity at t = 0") {
  std::mt19937_64 rng(13);
  for (int n = 0; n < 50; ++n) {
    const auto r = oracle::random_instance(rng);
    RiccatiFlow flow(r.a, r.d, r.b);
    LyapunovFlow free(r.a, r.d);
    CHECK(oracle::rel_diff(flow.propagate(r.sigma0, 0.0), r.sigma0) < 1e-13);
    CHECK(oracle::rel_diff(free.propagate(r.sigma0, 0.0), r.sigma0) < 1e-13);
    const auto two = flow.propagate(flow.propagate(r.sigma0, 0.4), 0.9);
    CHECK(oracle::rel_diff(two, flow.propagate(r.sigma0, 1.3)) < 1e-10);
    const auto two_free = free.propagate(free.propagate(r.sigma0, 0.4), 0.9);
    CHECK(oracle::rel_diff(two_free, free.propagate(r.sigma0, 1.3)) < 1e-12);
  }
}

TEST_CASE("b = 0 reduces to the lyapunov flow") {
  std::mt19937_64 rng(14);
  for (int n = 0; n < 50; ++n) {
    auto r = oracle::random_instance(rng);
    r.b = Mat2{};
    const auto lhs = riccati_propagate(r.sigma0, r.a, r.d, r.b, 1.7);
    CHECK(oracle::rel_diff(lhs, lyapunov_propagate(r.sigma0, r.a, r.d, 1.7)) < 1e-12);
    CHECK(oracle::rel_diff(riccati_asymptote(r.a, r.d, r.b), lyapunov_asymptote(r.a, r.d)) < 1e-12);
  }
}

TEST_CASE("asymptotes are fixed points and the long-time limit") {
  std::mt19937_64 rng(15);
  for (int n = 0; n < 50; ++n) {
    const auto r = oracle::random_instance(rng);
    const auto x = riccati_asymptote(r.a, r.d, r.b);
    CHECK(oracle::rel_diff(riccati_propagate(x, r.a, r.d, r.b, 2.0), x) < 1e-10);
    CHECK(oracle::rel_diff(riccati_propagate(r.sigma0, r.a, r.d, r.b, 200.0), x) < 1e-8);
    const auto rhs = riccati_rhs(r.a, r.d, gram(r.b), x);
    CHECK(std::abs(rhs.xx) + std::abs(rhs.xp) + std::abs(rhs.pp) < 1e-10 * (1.0 + std::abs(x.xx) + std::abs(x.pp)));
    if (r.b.m12 > 1e-3)
      CHECK(oracle::rel_diff(riccati_asymptote_from_pair(r.a, r.d, r.b), x) < 1e-8);
  }
}

TEST_CASE("measured asymptote shrinks with b") {
  double prev = lyapunov_asymptote(fig3(0).a, fig3(0).d).xx;
  for (double b : {0.5, 1.0, 2.0, 3.0, 5.0, 8.0}) {
    const auto m = fig3(b);
    const double xx = riccati_asymptote(m.a, m.d, m.b).xx;
    CHECK(xx < prev);
    CHECK(xx > 0.0);
    prev = xx;
  }
}

TEST_CASE("equilibration at omega2 for t = 4") {
  const auto m = fig3(0);
  const auto x = lyapunov_asymptote(m.a, m.d);
  const auto s = lyapunov_propagate(SymMat2{1.0, 0.0, 1.0}, m.a, m.d, 4.0);
  CHECK(std::abs(s.xx - x.xx) < 0.01 * x.xx);
  CHECK(std::abs(s.pp - x.pp) < 0.01 * x.pp);
}

TEST_CASE("physicality is preserved") {
  std::mt19937_64 rng(16);
  for (int n = 0; n < 100; ++n) {
    const auto r = oracle::random_instance(rng);
    for (double t : {0.1, 1.0, 10.0}) {
      const auto s = riccati_propagate(r.sigma0, r.a, r.d, r.b, t);
      CHECK(s.xx > 0.0);
      CHECK(s.xx * s.pp - s.xp * s.xp > 0.0);
    }
  }
}

TEST_CASE("ode oracle is fourth order") {
  const auto m = fig3(3.0);
  const SymMat2 s0{1.0, 0.2, 1.5};
  const auto exact = riccati_propagate(s0, m.a, m.d, m.b, 1.0);
  const double e1 = oracle::rel_diff(ode_oracle(s0, m.a, m.d, m.b, 1.0, 4e-3), exact);
  const double e2 = oracle::rel_diff(ode_oracle(s0, m.a, m.d, m.b, 1.0, 2e-3), exact);
  CHECK(e1 < 1e-7);
  CHECK(std::log2(e1 / e2) == Approx(4.0).epsilon(0.1));

  const auto path = ode_oracle_path(s0, m.a, m.d, m.b, 0.01, 1e-3);
  CHECK(path.size() == 11);
  CHECK(oracle::rel_diff(path.front(), s0) == 0.0);
  CHECK(oracle::rel_diff(path.back(), ode_oracle(s0, m.a, m.d, m.b, 0.01, 1e-3)) < 1e-14);

  const double dt = default_oracle_step(s0, m.a, m.b);
  CHECK(dt > 0.0);
  CHECK(dt < 1e-3);

  try {
    ode_oracle(s0, m.a, m.d, m.b, 1.0, 0.5);
    FAIL("expected StepTooLarge");
  } catch (const NumericalError& e) {
    CHECK(e.code() == ErrorCode::StepTooLarge);
  }
}

TEST_CASE("SI flow against the oracle over a short window") {
  PhysicalParams p;
  const double omega = 2.0 * kPi * 1e5;
  NoiseRates rates{1e-6, 1e-6, 1e23, 1e7};
  p.efficiency = 0.3;
  const auto c = coefficients(p, omega, rates);
  const auto m = build_matrices(c);
  const auto x0 = lyapunov_asymptote(m.a, m.d);
  const double t = 2.0 * kPi / omega;
  const auto exact = riccati_propagate(x0, m.a, m.d, m.b, t);
  const auto ref = ode_oracle(x0, m.a, m.d, m.b, t, default_oracle_step(x0, m.a, m.b));
  CHECK(std::abs(exact.xx - ref.xx) < 1e-7 * ref.xx);
  CHECK(std::abs(exact.pp - ref.pp) < 1e-7 * ref.pp);
  CHECK(exact.xx * exact.pp - exact.xp * exact.xp >= 0.25 * constants::kHbar * constants::kHbar * (1 - 1e-6));
}

TEST_CASE("conditional mean step") {
  const auto m = fig3(3.0);
  GaussianState g{{0.4, -0.2}, {1.0, 0.0, 1.0}, 0.0};
  const auto a = conditional_mean_step(g, m.a, m.d, m.b, 0.7, 1e-3);
  const auto bzero = conditional_mean_step(g, m.a, m.d, m.b, 0.0, 1e-3);
  // Innovation enters through sigma B: (sxx b, sxp b) dW.
  CHECK(a.mean.x - bzero.mean.x == Approx(3.0 * 1.0 * 0.7));
  CHECK(a.mean.p - bzero.mean.p == Approx(0.0));
  CHECK(bzero.mean.x == Approx(0.4 + 1e-3 * (-1.0 * 0.4 + -0.2)));
  CHECK(a.time == Approx(1e-3));
  CHECK(oracle::rel_diff(a.cov, riccati_propagate(g.cov, m.a, m.d, m.b, 1e-3)) < 1e-14);

  // eta = 0 means no measurement record: the mean is deterministic.
  const auto free = fig3(0.0);
  const auto f1 = conditional_mean_step(g, free.a, free.d, free.b, 0.7, 1e-3);
  const auto f2 = conditional_mean_step(g, free.a, free.d, free.b, -2.0, 1e-3);
  CHECK(f1.mean.x == f2.mean.x);
  CHECK(f1.mean.p == f2.mean.p);

  CHECK_THROWS_AS(conditional_mean_step(g, m.a, m.d, Mat2{1.0, 0.0, 0.0, 0.0}, 0.1, 1e-3), NumericalError);
}

TEST_CASE("ensemble statistics") {
  const auto m = fig3(3.0);
  GaussianState g{{0.0, 0.0}, {1.0, 0.0, 1.0}, 0.0};
  EnsembleOptions o;
  o.trajectories = 4000;
  o.t = 1.0;
  o.dt = 1e-3;
  o.seed = 3;
  const auto e = simulate_ensemble(g, m.a, m.d, m.b, o);
  CHECK(e.trajectories == 4000);
  CHECK(std::abs(e.mean_of_means.x) < 0.1);
  CHECK(std::abs(e.mean_of_means.p) < 0.1);
  // Law of total variance: unconditional = conditional + spread of means.
  const auto total = lyapunov_propagate(g.cov, m.a, m.d, 1.0);
  CHECK(e.conditional_cov.xx + e.covariance_of_means.xx == Approx(total.xx).epsilon(0.08));

  o.threads = 1;
  const auto single = simulate_ensemble(g, m.a, m.d, m.b, o);
  o.threads = 4;
  const auto multi = simulate_ensemble(g, m.a, m.d, m.b, o);
  CHECK(single.mean_of_means.x == multi.mean_of_means.x);
  CHECK(single.covariance_of_means.pp == multi.covariance_of_means.pp);
  CHECK(single.seed == 3);
}

TEST_CASE("trajectory output") {
  const auto m = fig3(3.0);
  GaussianState g{{0.0, 0.0}, {1.0, 0.0, 1.0}, 0.0};
  const auto p1 = simulate_trajectory(g, m.a, m.d, m.b, 0.1, 1e-3, 9);
  const auto p2 = simulate_trajectory(g, m.a, m.d, m.b, 0.1, 1e-3, 9);
  const auto p3 = simulate_trajectory(g, m.a, m.d, m.b, 0.1, 1e-3, 10);
  REQUIRE(p1.size() == 101);
  CHECK(p1.back().mean.x == p2.back().mean.x);
  CHECK(p1.back().mean.x != p3.back().mean.x);
  CHECK(p1.back().time == Approx(0.1));

  std::ostringstream os;
  write_trajectory_csv(os, p1, 9);
  const auto text = os.str();
  CHECK(text.rfind("time,mean_x,mean_p,sxx,sxp,spp,seed", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 102);
}
