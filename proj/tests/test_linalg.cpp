#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "levisqueeze/errors.hpp"
#include "levisqueeze/linalg.hpp"
#include "oracles.hpp"

using namespace levisqueeze;
using doctest::Approx;

namespace {

constexpr double kPiD = 3.141592653589793;

double rel(const Mat2& got, const Eigen::Matrix2d& want) {
  return (oracle::to_eigen(got) - want).norm() / std::max(1e-300, want.norm());
}

Mat2 random_mat(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng), u(rng)};
}

Mat2 drift(double a1, double a2, double m, double w) { return {-a1, 1.0 / m, -m * w * w, -a2}; }

}  // namespace

TEST_CASE("mat2_exp trivial values") {
  const Mat2 i = mat2_exp(Mat2::zero(), 1.0);
  CHECK(i.m11 == 1.0);
  CHECK(i.m22 == 1.0);
  CHECK(i.m12 == 0.0);
  CHECK(i.m21 == 0.0);
  const Mat2 d = mat2_exp(Mat2::diag(-1.0, -2.0), std::log(2.0));
  CHECK(d.m11 == Approx(0.5).epsilon(1e-14));
  CHECK(d.m22 == Approx(0.25).epsilon(1e-14));
}

TEST_CASE("mat2_exp quarter period of the undamped oscillator") {
  const double w = 1.5 * kPiD;
  const Mat2 a{0.0, 1.0, -w * w, 0.0};
  const double t = kPiD / (2.0 * w);
  const Mat2 e = mat2_exp(a, t);
  CHECK(rel(e, oracle::taylor_exp(oracle::to_eigen(a) * t)) < 1e-13);
  CHECK(e.m11 == Approx(0.0).epsilon(1e-14));
  CHECK(e.m12 == Approx(1.0 / w).epsilon(1e-13));
  CHECK(e.m21 == Approx(-w).epsilon(1e-13));
}

TEST_CASE("mat2_exp matches the Taylor oracle on random inputs and near-degenerate spectra") {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 200; ++k) {
    const Mat2 a = random_mat(rng, 5.0);
    const double t = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
    CHECK(rel(mat2_exp(a, t), oracle::taylor_exp(oracle::to_eigen(a) * t)) < 1e-11);
  }
  // Repeated eigenvalue (Jordan block) and discriminant just off zero.
  for (double eps : {0.0, 1e-14, -1e-14, 1e-10, -1e-10, 1e-6}) {
    const Mat2 a{-1.0, 1.0, eps, -1.0};
    CHECK(rel(mat2_exp(a, 2.0), oracle::taylor_exp(oracle::to_eigen(a) * 2.0)) < 1e-11);
  }
}

TEST_CASE("mat2_exp semigroup and determinant laws") {
  std::mt19937_64 rng(12);
  for (int k = 0; k < 100; ++k) {
    Mat2 a = random_mat(rng, 5.0);
    const double n = frobenius_norm(a);
    if (n > 5.0) a = (5.0 / n) * a;
    const double s = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const double t = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const Mat2 lhs = mat2_exp(a, s) * mat2_exp(a, t);
    CHECK(rel(lhs, oracle::to_eigen(mat2_exp(a, s + t))) < 1e-10);
    CHECK(mat2_exp(a, t).det() == Approx(std::exp(t * a.trace())).epsilon(1e-10));
  }
}

TEST_CASE("mat2_inverse") {
  const Mat2 i = mat2_inverse(Mat2::identity());
  CHECK(i.m11 == 1.0);
  CHECK(i.m22 == 1.0);
  const Mat2 d = mat2_inverse(Mat2::diag(2.0, 4.0));
  CHECK(d.m11 == 0.5);
  CHECK(d.m22 == 0.25);
  const Mat2 m{1.0, 2.0, 3.0, 4.0};
  const Mat2 inv = mat2_inverse(m);
  CHECK(inv.m11 == Approx(-2.0));
  CHECK(inv.m12 == Approx(1.0));
  CHECK(inv.m21 == Approx(1.5));
  CHECK(inv.m22 == Approx(-0.5));
  const Mat2 p = m * inv;
  CHECK(std::abs(p.m11 - 1.0) < 1e-12);
  CHECK(std::abs(p.m12) < 1e-12);
  CHECK(std::abs(p.m21) < 1e-12);
  CHECK(std::abs(p.m22 - 1.0) < 1e-12);
  CHECK_THROWS_AS(mat2_inverse(Mat2{1.0, 2.0, 2.0, 4.0}), NumericalError);
  try {
    mat2_inverse(Mat2{1.0, 2.0, 2.0, 4.0});
  } catch (const NumericalError& e) {
    CHECK(e.code() == ErrorCode::SingularMatrix);
  }
  // The tolerance is relative: tiny but well-conditioned matrices invert.
  const Mat2 small = mat2_inverse(Mat2::diag(1e-20, 2e-20));
  CHECK(small.m11 == Approx(1e20));
}

TEST_CASE("solve_lyapunov") {
  const SymMat2 x = solve_lyapunov(Mat2::diag(-1.0, -1.0), SymMat2::diag(2.0, 2.0));
  CHECK(x.xx == Approx(1.0));
  CHECK(x.pp == Approx(1.0));
  CHECK(x.xp == Approx(0.0));

  const Mat2 a = drift(1.0, 1.0, 1.0, 1.5 * kPiD);
  const SymMat2 d = SymMat2::diag(0.5, 0.5);
  const SymMat2 xs = solve_lyapunov(a, d);
  // Above the infinite-frequency value d1 / (2 (a1 + a2)) = 0.125.
  CHECK(xs.xx > 0.125);
  CHECK(oracle::rel_diff(xs, oracle::kron_lyapunov(oracle::to_eigen(a), oracle::to_eigen(d))) < 1e-12);
  CHECK(frobenius_norm(lyapunov_operator(a, xs) + d) <= 1e-10 * frobenius_norm(d));
  // Long-time RK4 of the Lyapunov ODE settles on the same point.
  const auto path = oracle::rk4(Eigen::Matrix2d::Identity(), oracle::to_eigen(a), oracle::to_eigen(d),
                                Eigen::Matrix2d::Zero(), {30.0}, 1e-3);
  CHECK(oracle::rel_diff(xs, path.back()) < 1e-9);

  CHECK_THROWS_AS(solve_lyapunov(Mat2{0.0, 1.0, -1.0, 0.0}, SymMat2::diag(1.0, 1.0)), NumericalError);
}

TEST_CASE("solve_lyapunov agrees with the Kronecker solve on random Hurwitz drifts") {
  std::mt19937_64 rng(13);
  for (int k = 0; k < 200; ++k) {
    const auto inst = oracle::random_instance(rng);
    const SymMat2 x = solve_lyapunov(inst.a, inst.d);
    const auto want = oracle::kron_lyapunov(oracle::to_eigen(inst.a), oracle::to_eigen(inst.d));
    CHECK(oracle::rel_diff(x, want) < 1e-10);
    CHECK(frobenius_norm(lyapunov_operator(inst.a, x) + inst.d) <= 1e-10 * frobenius_norm(inst.d));
  }
}

TEST_CASE("solve_lyapunov on SI-scaled drifts") {
  const double m = 1e-18;
  const double w = 2.0 * kPiD * 1e5;
  const Mat2 a = drift(5e-7, 1.5e-6, m, w);
  const SymMat2 d{1.678e-21, 0.0, 2.226e-42};
  const SymMat2 x = solve_lyapunov(a, d);
  // Residual measured in the frame where A has balanced off-diagonals, where
  // every entry of X and D is comparable.
  const auto sc = DiagonalScaling::for_drift(a);
  const Mat2 ab = sc.similar(a);
  const SymMat2 xb = sc.shrink(x);
  const SymMat2 rb = lyapunov_operator(ab, xb) + sc.shrink(d);
  CHECK(frobenius_norm(rb) <= 1e-12 * frobenius_norm(ab) * frobenius_norm(xb));
  const auto want = oracle::kron_lyapunov(oracle::to_eigen(ab), oracle::to_eigen(sc.shrink(d)));
  CHECK(oracle::rel_diff(xb, want) < 1e-9);
  // Equipartition-like ratio of the weakly damped oscillator.
  CHECK(x.pp / x.xx == Approx(m * m * w * w).epsilon(1e-5));
}

TEST_CASE("solve_care examples") {
  const SymMat2 x0 = solve_care(Mat2::diag(-1.0, -1.0), SymMat2::diag(1.0, 1.0), Mat2::zero());
  CHECK(x0.xx == Approx(0.5));
  CHECK(x0.pp == Approx(0.5));

  const SymMat2 x3 = solve_care_gram(Mat2::diag(-1.0, -1.0), SymMat2::diag(1.0, 1.0), SymMat2::diag(3.0, 3.0));
  CHECK(x3.xx == Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(x3.pp == Approx(1.0 / 3.0).epsilon(1e-12));

  const Mat2 a = drift(1.0, 1.0, 1.0, 1.5 * kPiD);
  const SymMat2 d = SymMat2::diag(0.5, 0.5);
  const Mat2 b{0.0, 3.0, 0.0, 0.0};
  const SymMat2 x1 = solve_care(a, d, b);
  CHECK(x1.xx < solve_lyapunov(a, d).xx);
  CHECK(frobenius_norm(care_residual(a, d, gram(b), x1)) <= 1e-9 * frobenius_norm(d));
  double prev = solve_lyapunov(a, d).xx;
  for (double bb : {0.5, 1.0, 3.0, 5.0, 8.0}) {
    const double xx = solve_care(a, d, Mat2{0.0, bb, 0.0, 0.0}).xx;
    CHECK(xx <= prev * (1.0 + 1e-12));
    prev = xx;
  }
}

TEST_CASE("solve_care invariants on random inputs") {
  std::mt19937_64 rng(14);
  for (int k = 0; k < 200; ++k) {
    const auto inst = oracle::random_instance(rng);
    const SymMat2 g = gram(inst.b);
    const SymMat2 x = solve_care(inst.a, inst.d, inst.b);
    CHECK(x.xx >= 0.0);
    CHECK(x.pp >= 0.0);
    CHECK(x.det() >= -1e-12 * x.xx * x.pp);
    CHECK(is_hurwitz(inst.a - x.full() * g.full()));
    CHECK(frobenius_norm(care_residual(inst.a, inst.d, g, x)) <= 1e-9 * frobenius_norm(inst.d));

    // The anti-stabilizing root makes the closed-loop drift anti-Hurwitz.
    if (inst.b.m12 > 0.1) {
      const SymMat2 xa = solve_care(inst.a, inst.d, inst.b, CareBranch::AntiStabilizing);
      CHECK(is_anti_hurwitz(inst.a - xa.full() * g.full()));
      CHECK(frobenius_norm(care_residual(inst.a, inst.d, g, xa)) <= 1e-8 * frobenius_norm(xa) * frobenius_norm(xa) *
                                                                        (1.0 + frobenius_norm(g)));
    }
  }
}

TEST_CASE("solve_care tends to the Lyapunov solution as B vanishes") {
  const Mat2 a = drift(1.0, 1.0, 1.0, 1.5 * kPiD);
  const SymMat2 d = SymMat2::diag(0.5, 0.5);
  const SymMat2 x = solve_care(a, d, Mat2{0.0, 1e-6, 0.0, 0.0});
  CHECK(oracle::rel_diff(x, solve_lyapunov(a, d)) < 1e-4);
}

TEST_CASE("solve_care reports a missing stabilizing solution") {
  // Undamped, unmeasured and noisy: no stabilizing root.
  CHECK_THROWS_AS(solve_care(Mat2{0.0, 1.0, -1.0, 0.0}, SymMat2::diag(1.0, 1.0), Mat2::zero()), NumericalError);
}

TEST_CASE("solve_x2") {
  // -A^T X - X A... with script_a = -I: -2 X2 - 2 I = 0 gives X2 = -I.
  const SymMat2 x = solve_x2_gram(Mat2::diag(-1.0, -1.0), SymMat2::diag(2.0, 2.0));
  CHECK(x.xx == Approx(-1.0));
  CHECK(x.pp == Approx(-1.0));
  const SymMat2 z = solve_x2(Mat2::diag(-1.0, -1.0), Mat2::zero());
  CHECK(z.xx == 0.0);
  CHECK(z.pp == 0.0);
  CHECK_THROWS_AS(solve_x2(Mat2{0.0, 1.0, -1.0, 0.0}, Mat2{0.0, 1.0, 0.0, 0.0}), NumericalError);

  // Residual identity on a measured Fig.-3-type problem.
  const Mat2 a = drift(1.0, 1.0, 1.0, 1.5 * kPiD);
  const Mat2 b{0.0, 3.0, 0.0, 0.0};
  const SymMat2 x1 = solve_care(a, SymMat2::diag(0.5, 0.5), b);
  const Mat2 sa = a - x1.full() * gram(b).full();
  const SymMat2 x2 = solve_x2(sa, b);
  const Mat2 r = sa.transposed() * x2.full() + x2.full() * sa - gram(b).full();
  CHECK(frobenius_norm(r) < 1e-10 * frobenius_norm(gram(b)));
}

TEST_CASE("solve_discrete_sylvester") {
  const SymMat2 rhs{1.0, 0.3, 2.0};
  const SymMat2 a0 = solve_discrete_sylvester(Mat2::zero(), rhs);
  CHECK(a0.xx == Approx(1.0));
  CHECK(a0.xp == Approx(0.3));
  const SymMat2 a1 = solve_discrete_sylvester(Mat2::diag(0.5, 0.5), SymMat2::diag(3.0, 3.0));
  CHECK(a1.xx == Approx(4.0));
  CHECK(a1.pp == Approx(4.0));
  CHECK_THROWS_AS(solve_discrete_sylvester(Mat2::diag(1.0, 0.5), rhs), NumericalError);

  // Fixed-point iteration oracle on a contracting damped cycle map.
  const double w1 = 0.75 * kPiD, w2 = 1.5 * kPiD;
  const Mat2 f = mat2_exp(drift(0.6, 1.0, 1.0, w2), kPiD / (2.0 * w2)) *
                 mat2_exp(drift(0.6, 1.0, 1.0, w1), kPiD / (2.0 * w1));
  REQUIRE(spectral_radius(f) < 1.0);
  const SymMat2 alpha = solve_discrete_sylvester(f, rhs);
  SymMat2 it = SymMat2::zero();
  for (int n = 0; n < 10000; ++n) it = congruence(f, it) + rhs;
  CHECK(oracle::rel_diff(alpha, it) < 1e-10);
  const SymMat2 res = alpha - congruence(f, alpha) - rhs;
  CHECK(frobenius_norm(res) < 1e-10 * frobenius_norm(rhs));
}

TEST_CASE("DiagonalScaling is a similarity") {
  const Mat2 a = drift(5e-7, 1.5e-6, 1e-18, 6e5);
  const auto sc = DiagonalScaling::for_drift(a);
  const Mat2 b = sc.similar(a);
  CHECK(std::abs(b.m12) == Approx(std::abs(b.m21)).epsilon(1e-12));
  const Mat2 back = sc.unsimilar(b);
  CHECK(back.m21 == Approx(a.m21).epsilon(1e-14));
  const SymMat2 s{2.0, 3e-12, 5e-23};
  const SymMat2 t = sc.grow(sc.shrink(s));
  CHECK(t.xp == Approx(s.xp).epsilon(1e-14));
  CHECK(t.pp == Approx(s.pp).epsilon(1e-14));
}

TEST_CASE("is_physical applies the uncertainty bound") {
  CHECK(is_physical(SymMat2::diag(0.5, 0.5), 1.0));
  CHECK(is_physical(SymMat2::diag(0.5, 0.5 * (1.0 - 1e-12)), 1.0));
  CHECK_FALSE(is_physical(SymMat2::diag(0.5, 0.49), 1.0));
  CHECK_FALSE(is_physical(SymMat2{-1.0, 0.0, -1.0}, 1.0));
}
