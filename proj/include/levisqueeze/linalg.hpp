#pragma once

// Exact 2x2 real kernel for covariance algebra: matrix exponential, inverse,
// continuous Lyapunov / algebraic Riccati solvers and the discrete Stein
// equation used by the protocol fixed point.

#include <array>
#include <cmath>
#include <complex>

#include "levisqueeze/errors.hpp"

namespace levisqueeze {

/// Numerical tolerances of the 2x2 kernel. Everything that compares against a
/// threshold reads it from here.
namespace tol {
inline constexpr double kExpDegenerate = 1e-12;     // |discriminant| below -> series branch
inline constexpr double kSingularRelative = 1e-14;  // |det| relative to |m11 m22| + |m12 m21|
inline constexpr double kLyapunovResidual = 1e-10;
inline constexpr double kCareResidual = 1e-9;
inline constexpr double kSteinResidual = 1e-10;
inline constexpr double kSpectralMargin = 1e-12;    // |Re eig| below -> on the imaginary axis
inline constexpr double kComplexLeak = 1e-8;        // imaginary part tolerated in CARE basis
inline constexpr int kNewtonRefinementSteps = 4;
}  // namespace tol

struct Vec2 {
  double x{};
  double p{};

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.p + b.p}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.p - b.p}; }
  friend Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.p}; }
};

struct Mat2 {
  double m11{};
  double m12{};
  double m21{};
  double m22{};

  static constexpr Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
  static constexpr Mat2 zero() { return {}; }
  static constexpr Mat2 diag(double a, double d) { return {a, 0.0, 0.0, d}; }

  constexpr double trace() const { return m11 + m22; }
  constexpr double det() const { return m11 * m22 - m12 * m21; }
  constexpr Mat2 transposed() const { return {m11, m21, m12, m22}; }
  bool is_finite() const {
    return std::isfinite(m11) && std::isfinite(m12) && std::isfinite(m21) && std::isfinite(m22);
  }

  friend constexpr Mat2 operator+(const Mat2& a, const Mat2& b) {
    return {a.m11 + b.m11, a.m12 + b.m12, a.m21 + b.m21, a.m22 + b.m22};
  }
  friend constexpr Mat2 operator-(const Mat2& a, const Mat2& b) {
    return {a.m11 - b.m11, a.m12 - b.m12, a.m21 - b.m21, a.m22 - b.m22};
  }
  friend constexpr Mat2 operator*(double s, const Mat2& a) {
    return {s * a.m11, s * a.m12, s * a.m21, s * a.m22};
  }
  friend constexpr Mat2 operator*(const Mat2& a, const Mat2& b) {
    return {a.m11 * b.m11 + a.m12 * b.m21, a.m11 * b.m12 + a.m12 * b.m22,
            a.m21 * b.m11 + a.m22 * b.m21, a.m21 * b.m12 + a.m22 * b.m22};
  }
  friend constexpr Vec2 operator*(const Mat2& a, Vec2 v) {
    return {a.m11 * v.x + a.m12 * v.p, a.m21 * v.x + a.m22 * v.p};
  }
};

/// Symmetric 2x2 matrix stored as its three independent components. Used for
/// every covariance-like quantity so symmetry holds by construction.
struct SymMat2 {
  double xx{};
  double xp{};
  double pp{};

  static constexpr SymMat2 identity() { return {1.0, 0.0, 1.0}; }
  static constexpr SymMat2 zero() { return {}; }
  static constexpr SymMat2 diag(double a, double d) { return {a, 0.0, d}; }
  /// Symmetric part of a general matrix.
  static constexpr SymMat2 sym_part(const Mat2& m) { return {m.m11, 0.5 * (m.m12 + m.m21), m.m22}; }

  constexpr Mat2 full() const { return {xx, xp, xp, pp}; }
  constexpr double det() const { return xx * pp - xp * xp; }
  constexpr double trace() const { return xx + pp; }
  bool is_finite() const { return std::isfinite(xx) && std::isfinite(xp) && std::isfinite(pp); }

  friend constexpr SymMat2 operator+(const SymMat2& a, const SymMat2& b) {
    return {a.xx + b.xx, a.xp + b.xp, a.pp + b.pp};
  }
  friend constexpr SymMat2 operator-(const SymMat2& a, const SymMat2& b) {
    return {a.xx - b.xx, a.xp - b.xp, a.pp - b.pp};
  }
  friend constexpr SymMat2 operator*(double s, const SymMat2& a) { return {s * a.xx, s * a.xp, s * a.pp}; }
};

double frobenius_norm(const Mat2& m);
double frobenius_norm(const SymMat2& m);

/// E S E^T, evaluated component-wise.
SymMat2 congruence(const Mat2& e, const SymMat2& s);
/// B B^T.
SymMat2 gram(const Mat2& b);
/// A S + S A^T.
SymMat2 lyapunov_operator(const Mat2& a, const SymMat2& s);
/// S G S for symmetric S, G.
SymMat2 sandwich(const SymMat2& s, const SymMat2& g);

/// True when the covariance satisfies xx > 0, pp > 0 and the uncertainty
/// bound det >= (hbar/2)^2 up to the relative slack `slack`.
bool is_physical(const SymMat2& s, double hbar, double slack = 1e-9);

std::array<std::complex<double>, 2> eigenvalues(const Mat2& m);
double spectral_radius(const Mat2& m);
double max_real_eigenvalue(const Mat2& m);
bool is_hurwitz(const Mat2& m);
bool is_anti_hurwitz(const Mat2& m);

/// Diagonal similarity T = diag(1, k) that equalises the off-diagonal
/// magnitudes of A. Used to bring SI-scaled problems to O(1) entries before
/// solving; the solvers below apply it internally.
struct DiagonalScaling {
  double k{1.0};

  static DiagonalScaling for_drift(const Mat2& a);
  static DiagonalScaling for_covariance(const SymMat2& s);

  Mat2 similar(const Mat2& a) const { return {a.m11, a.m12 * k, a.m21 / k, a.m22}; }          // T^-1 A T
  Mat2 unsimilar(const Mat2& a) const { return {a.m11, a.m12 / k, a.m21 * k, a.m22}; }        // T A T^-1
  SymMat2 shrink(const SymMat2& s) const { return {s.xx, s.xp / k, s.pp / (k * k)}; }          // T^-1 S T^-1
  SymMat2 grow(const SymMat2& s) const { return {s.xx, s.xp * k, s.pp * k * k}; }              // T S T
};

/// e^{tA} via the closed 2x2 formula: trace part times cos/cosh of the
/// traceless part, with a series branch near repeated eigenvalues.
Mat2 mat2_exp(const Mat2& a, double t);

/// W(t) = int_0^t e^{sA} D e^{sA^T} ds through Van Loan's augmented
/// exponential in the balanced frame. No steady state is involved, so it stays
/// accurate when X dwarfs W (weak damping, where sigma - X cancels).
SymMat2 lyapunov_increment(const Mat2& a, const SymMat2& d, double t);

Mat2 mat2_inverse(const Mat2& m);
SymMat2 sym_inverse(const SymMat2& s);

/// Solves A X + X A^T + D = 0. Throws NotHurwitz unless A is Hurwitz.
SymMat2 solve_lyapunov(const Mat2& a, const SymMat2& d);

/// Same equation without the stability precondition; only requires the
/// eigenvalues of A to have no pair summing to zero. Throws NotHurwitz when
/// that fails (the linear system is singular).
SymMat2 solve_lyapunov_general(const Mat2& a, const SymMat2& d);

enum class CareBranch {
  Stabilizing,      ///< A - X B B^T Hurwitz
  AntiStabilizing,  ///< A - X B B^T anti-Hurwitz
};

/// Solves A X + X A^T + D - X B B^T X = 0 through the invariant subspaces of
/// the 4x4 matrix [[-A^T, BB^T], [D, A]], followed by Newton polishing.
SymMat2 solve_care(const Mat2& a, const SymMat2& d, const Mat2& b,
                   CareBranch branch = CareBranch::Stabilizing);
SymMat2 solve_care_gram(const Mat2& a, const SymMat2& d, const SymMat2& bbt,
                        CareBranch branch = CareBranch::Stabilizing);

/// A X + X A^T + D - X G X, the residual of the algebraic Riccati equation.
SymMat2 care_residual(const Mat2& a, const SymMat2& d, const SymMat2& bbt, const SymMat2& x);

/// Solves script_a^T X2 + X2 script_a - B B^T = 0. script_a must be Hurwitz or
/// anti-Hurwitz (otherwise NotHurwitz).
SymMat2 solve_x2(const Mat2& script_a, const Mat2& b);
SymMat2 solve_x2_gram(const Mat2& script_a, const SymMat2& bbt);

/// Solves alpha - F alpha F^T = rhs. Throws SpectralRadiusGEOne when rho(F) >= 1.
SymMat2 solve_discrete_sylvester(const Mat2& f, const SymMat2& rhs);

/// Same equation whenever 1 - mu_i mu_j != 0 for the eigenvalues of F; the
/// solution is then the (possibly repelling) fixed point of S -> F S F^T + rhs.
SymMat2 solve_discrete_sylvester_general(const Mat2& f, const SymMat2& rhs);

}  // namespace levisqueeze
