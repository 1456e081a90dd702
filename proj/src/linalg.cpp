#include "levisqueeze/linalg.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>
#include <algorithm>
#include <vector>

namespace levisqueeze {

double frobenius_norm(const Mat2& m) {
  return std::sqrt(m.m11 * m.m11 + m.m12 * m.m12 + m.m21 * m.m21 + m.m22 * m.m22);
}

double frobenius_norm(const SymMat2& m) {
  return std::sqrt(m.xx * m.xx + 2.0 * m.xp * m.xp + m.pp * m.pp);
}

SymMat2 congruence(const Mat2& e, const SymMat2& s) {
  return {
      e.m11 * e.m11 * s.xx + 2.0 * e.m11 * e.m12 * s.xp + e.m12 * e.m12 * s.pp,
      e.m11 * e.m21 * s.xx + (e.m11 * e.m22 + e.m12 * e.m21) * s.xp + e.m12 * e.m22 * s.pp,
      e.m21 * e.m21 * s.xx + 2.0 * e.m21 * e.m22 * s.xp + e.m22 * e.m22 * s.pp,
  };
}

SymMat2 gram(const Mat2& b) {
  return {b.m11 * b.m11 + b.m12 * b.m12, b.m11 * b.m21 + b.m12 * b.m22, b.m21 * b.m21 + b.m22 * b.m22};
}

SymMat2 lyapunov_operator(const Mat2& a, const SymMat2& s) {
  return {
      2.0 * (a.m11 * s.xx + a.m12 * s.xp),
      a.m21 * s.xx + (a.m11 + a.m22) * s.xp + a.m12 * s.pp,
      2.0 * (a.m21 * s.xp + a.m22 * s.pp),
  };
}

SymMat2 sandwich(const SymMat2& s, const SymMat2& g) {
  // S G S = S (G S); symmetric, so only three products are needed.
  const Mat2 gs = g.full() * s.full();
  return {
      s.xx * gs.m11 + s.xp * gs.m21,
      s.xx * gs.m12 + s.xp * gs.m22,
      s.xp * gs.m12 + s.pp * gs.m22,
  };
}

bool is_physical(const SymMat2& s, double hbar, double slack) {
  if (!(s.xx > 0.0 && s.pp > 0.0)) return false;
  return s.det() >= 0.25 * hbar * hbar * (1.0 - slack);
}

std::array<std::complex<double>, 2> eigenvalues(const Mat2& m) {
  const double half_trace = 0.5 * m.trace();
  const double half_diff = 0.5 * (m.m11 - m.m22);
  const double disc = half_diff * half_diff + m.m12 * m.m21;
  if (disc >= 0.0) {
    const double r = std::sqrt(disc);
    return {std::complex<double>(half_trace + r, 0.0), std::complex<double>(half_trace - r, 0.0)};
  }
  const double r = std::sqrt(-disc);
  return {std::complex<double>(half_trace, r), std::complex<double>(half_trace, -r)};
}

double spectral_radius(const Mat2& m) {
  const auto ev = eigenvalues(m);
  return std::max(std::abs(ev[0]), std::abs(ev[1]));
}

double max_real_eigenvalue(const Mat2& m) {
  const auto ev = eigenvalues(m);
  return std::max(ev[0].real(), ev[1].real());
}

// For 2x2, Re(eig) < 0 for both eigenvalues iff trace < 0 and det > 0.
bool is_hurwitz(const Mat2& m) { return m.trace() < 0.0 && m.det() > 0.0; }

bool is_anti_hurwitz(const Mat2& m) { return m.trace() > 0.0 && m.det() > 0.0; }

DiagonalScaling DiagonalScaling::for_drift(const Mat2& a) {
  if (a.m12 != 0.0 && a.m21 != 0.0) return {std::sqrt(std::abs(a.m21 / a.m12))};
  return {1.0};
}

DiagonalScaling DiagonalScaling::for_covariance(const SymMat2& s) {
  if (s.xx != 0.0 && s.pp != 0.0) return {std::sqrt(std::abs(s.pp / s.xx))};
  return {1.0};
}

Mat2 mat2_exp(const Mat2& a, double t) {
  const Mat2 m = t * a;
  const double mu = 0.5 * m.trace();
  const Mat2 n = m - mu * Mat2::identity();
  const double disc = n.m11 * n.m11 + n.m12 * n.m21;  // N^2 = disc * I

  double c = 0.0;   // e^mu * cosh/cos(sqrt|disc|)
  double sh = 0.0;  // e^mu * sinh/sin(sqrt|disc|) / sqrt|disc|
  if (std::abs(disc) < tol::kExpDegenerate) {
    const double em = std::exp(mu);
    c = em * (1.0 + disc / 2.0 + disc * disc / 24.0);
    sh = em * (1.0 + disc / 6.0 + disc * disc / 120.0);
  } else if (disc > 0.0) {
    // Split into e^{mu+s} and e^{mu-s} so large s does not overflow cosh.
    const double s = std::sqrt(disc);
    const double up = std::exp(mu + s);
    const double down = std::exp(mu - s);
    c = 0.5 * (up + down);
    sh = 0.5 * (up - down) / s;
  } else {
    const double s = std::sqrt(-disc);
    const double em = std::exp(mu);
    c = em * std::cos(s);
    sh = em * std::sin(s) / s;
  }
  return c * Mat2::identity() + sh * n;
}

SymMat2 lyapunov_increment(const Mat2& a, const SymMat2& d, double t) {
  const auto sc = DiagonalScaling::for_drift(a);
  const Mat2 ab = sc.similar(a);
  const SymMat2 db = sc.shrink(d);
  const double scale = std::max({std::abs(db.xx), std::abs(db.xp), std::abs(db.pp)});
  if (scale == 0.0 || t == 0.0) return SymMat2::zero();
  // s -> A s + s A^T on (xx, xp, pp), augmented by the normalized source so
  // the top-right column of the exponential is t phi1(t L) d.
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  m(0, 0) = 2.0 * ab.m11;
  m(0, 1) = 2.0 * ab.m12;
  m(1, 0) = ab.m21;
  m(1, 1) = ab.m11 + ab.m22;
  m(1, 2) = ab.m12;
  m(2, 1) = 2.0 * ab.m21;
  m(2, 2) = 2.0 * ab.m22;
  m(0, 3) = db.xx / scale;
  m(1, 3) = db.xp / scale;
  m(2, 3) = db.pp / scale;
  const Eigen::Matrix4d e = (t * m).exp();
  return sc.grow(SymMat2{e(0, 3) * scale, e(1, 3) * scale, e(2, 3) * scale});
}

Mat2 mat2_inverse(const Mat2& m) {
  const double det = m.det();
  const double scale = std::abs(m.m11 * m.m22) + std::abs(m.m12 * m.m21);
  if (!m.is_finite() || scale == 0.0 || std::abs(det) <= tol::kSingularRelative * scale) {
    throw NumericalError(ErrorCode::SingularMatrix, "2x2 determinant below tolerance");
  }
  return (1.0 / det) * Mat2{m.m22, -m.m12, -m.m21, m.m11};
}

SymMat2 sym_inverse(const SymMat2& s) { return SymMat2::sym_part(mat2_inverse(s.full())); }

namespace {

using Vec3 = Eigen::Vector3d;

SymMat2 from_vec3(const Vec3& v) { return {v(0), v(1), v(2)}; }
Vec3 to_vec3(const SymMat2& s) { return {s.xx, s.xp, s.pp}; }

// One step of iterative refinement on top of partial-pivot LU.
Vec3 solve3(const Eigen::Matrix3d& m, const Vec3& rhs) {
  const auto lu = m.partialPivLu();
  Vec3 v = lu.solve(rhs);
  v += lu.solve(rhs - m * v);
  return v;
}

// Matrix of S -> A S + S A^T acting on (xx, xp, pp).
Eigen::Matrix3d lyapunov_matrix(const Mat2& a) {
  Eigen::Matrix3d m;
  m << 2.0 * a.m11, 2.0 * a.m12, 0.0,
       a.m21, a.m11 + a.m22, a.m12,
       0.0, 2.0 * a.m21, 2.0 * a.m22;
  return m;
}

// Matrix of S -> F S F^T acting on (xx, xp, pp).
Eigen::Matrix3d congruence_matrix(const Mat2& f) {
  Eigen::Matrix3d m;
  m << f.m11 * f.m11, 2.0 * f.m11 * f.m12, f.m12 * f.m12,
       f.m11 * f.m21, f.m11 * f.m22 + f.m12 * f.m21, f.m12 * f.m22,
       f.m21 * f.m21, 2.0 * f.m21 * f.m22, f.m22 * f.m22;
  return m;
}

bool is_zero(const SymMat2& s) { return s.xx == 0.0 && s.xp == 0.0 && s.pp == 0.0; }

}  // namespace

SymMat2 solve_lyapunov_general(const Mat2& a, const SymMat2& d) {
  const auto sc = DiagonalScaling::for_drift(a);
  const Mat2 ab = sc.similar(a);
  const SymMat2 db = sc.shrink(d);

  // det of the operator is 4 tr(A) det(A): it vanishes iff an eigenvalue
  // pair sums to zero.
  const double na = frobenius_norm(ab);
  if (na == 0.0 || std::abs(4.0 * ab.trace() * ab.det()) <= 1e-14 * na * na * na) {
    throw NumericalError(ErrorCode::NotHurwitz,
                         "drift has eigenvalues summing to zero; no unique steady state");
  }
  const Vec3 v = solve3(lyapunov_matrix(ab), -to_vec3(db));
  return sc.grow(from_vec3(v));
}

SymMat2 solve_lyapunov(const Mat2& a, const SymMat2& d) {
  if (!is_hurwitz(a)) {
    throw NumericalError(ErrorCode::NotHurwitz, "drift matrix has an eigenvalue with Re >= 0");
  }
  return solve_lyapunov_general(a, d);
}

SymMat2 care_residual(const Mat2& a, const SymMat2& d, const SymMat2& bbt, const SymMat2& x) {
  return lyapunov_operator(a, x) + d - sandwich(x, bbt);
}

namespace {

bool matches_branch(const Mat2& closed_loop, CareBranch branch) {
  return branch == CareBranch::Stabilizing ? is_hurwitz(closed_loop) : is_anti_hurwitz(closed_loop);
}

// Invariant-subspace solution of the normalised problem (all entries O(1)).
SymMat2 care_subspace(const Mat2& a, const SymMat2& d, const SymMat2& g, CareBranch branch) {
  Eigen::Matrix4d h;
  h << -a.m11, -a.m21, g.xx, g.xp,
       -a.m12, -a.m22, g.xp, g.pp,
       d.xx, d.xp, a.m11, a.m12,
       d.xp, d.pp, a.m21, a.m22;

  const Eigen::EigenSolver<Eigen::Matrix4d> es(h);
  if (es.info() != Eigen::Success) {
    throw NumericalError(ErrorCode::NoStabilizingSolution, "eigen-decomposition failed");
  }
  const auto& values = es.eigenvalues();
  const auto& vectors = es.eigenvectors();
  const double margin = tol::kSpectralMargin * std::max(1.0, h.norm());

  // Columns [I; X] span the invariant subspace belonging to the eigenvalues of
  // -(A - X G)^T, so a stabilizing X takes the Re > 0 half of the spectrum.
  std::vector<int> picked;
  for (int i = 0; i < 4; ++i) {
    const double re = values(i).real();
    if (std::abs(re) <= margin) {
      throw NumericalError(ErrorCode::NoStabilizingSolution,
                           "Hamiltonian matrix has eigenvalues on the imaginary axis");
    }
    const bool want = branch == CareBranch::Stabilizing ? re > 0.0 : re < 0.0;
    if (want) picked.push_back(i);
  }
  if (picked.size() != 2) {
    throw NumericalError(ErrorCode::NoStabilizingSolution, "invariant subspace has wrong dimension");
  }

  Eigen::Matrix2cd top;
  Eigen::Matrix2cd bottom;
  for (int c = 0; c < 2; ++c) {
    const auto col = vectors.col(picked[c]);
    top(0, c) = col(0);
    top(1, c) = col(1);
    bottom(0, c) = col(2);
    bottom(1, c) = col(3);
  }
  const double col_scale = top.col(0).norm() * top.col(1).norm();
  if (col_scale == 0.0 || std::abs(top.determinant()) <= 1e-12 * col_scale) {
    throw NumericalError(ErrorCode::NoStabilizingSolution, "basis block of the subspace is singular");
  }
  const Eigen::Matrix2cd x = bottom * top.inverse();
  if (x.imag().norm() > tol::kComplexLeak * std::max(1.0, x.real().norm())) {
    throw NumericalError(ErrorCode::NoStabilizingSolution, "subspace solution is not real");
  }
  return {x(0, 0).real(), 0.5 * (x(0, 1).real() + x(1, 0).real()), x(1, 1).real()};
}

// Kleinman-Newton steps; each step is a Lyapunov solve with the closed-loop
// drift. Steps are kept only while they reduce the residual.
SymMat2 newton_polish(const Mat2& a, const SymMat2& d, const SymMat2& g, SymMat2 x, CareBranch branch) {
  double best = frobenius_norm(care_residual(a, d, g, x));
  for (int step = 0; step < tol::kNewtonRefinementSteps && best > 0.0; ++step) {
    const Mat2 closed = a - x.full() * g.full();
    SymMat2 next;
    try {
      next = solve_lyapunov_general(closed, d + sandwich(x, g));
    } catch (const NumericalError&) {
      break;
    }
    const double r = frobenius_norm(care_residual(a, d, g, next));
    if (!(r < best) || !matches_branch(a - next.full() * g.full(), branch)) break;
    best = r;
    x = next;
  }
  return x;
}

// Newton from a large multiple of the identity, which stabilizes any drift
// once the measurement gram is nonzero.
SymMat2 newton_from_scratch(const Mat2& a, const SymMat2& d, const SymMat2& g) {
  const double scale = (frobenius_norm(a) + 1.0) / std::max(frobenius_norm(g), 1e-300);
  SymMat2 x = (10.0 * scale) * SymMat2::identity();
  if (!is_hurwitz(a - x.full() * g.full())) {
    throw NumericalError(ErrorCode::NoStabilizingSolution, "no stabilizing initial guess");
  }
  for (int it = 0; it < 100; ++it) {
    const Mat2 closed = a - x.full() * g.full();
    const SymMat2 next = solve_lyapunov(closed, d + sandwich(x, g));
    const double change = frobenius_norm(next - x);
    x = next;
    if (change <= 1e-15 * std::max(1.0, frobenius_norm(x))) break;
  }
  return x;
}

}  // namespace

SymMat2 solve_care_gram(const Mat2& a, const SymMat2& d, const SymMat2& bbt, CareBranch branch) {
  if (is_zero(bbt)) {
    if (branch == CareBranch::Stabilizing && is_hurwitz(a)) return solve_lyapunov(a, d);
    throw NumericalError(ErrorCode::NoStabilizingSolution,
                         "no measurement and drift not of the requested stability type");
  }

  // Normalise: diagonal similarity for the drift, then a scalar rescaling of
  // the unknown that balances D against B B^T.
  const auto sc = DiagonalScaling::for_drift(a);
  const Mat2 ab = sc.similar(a);
  const SymMat2 db = sc.shrink(d);
  const SymMat2 gb = sc.grow(bbt);
  const double nd = frobenius_norm(db);
  const double ng = frobenius_norm(gb);
  const double s = nd > 0.0 ? std::sqrt(nd / ng) : std::max(frobenius_norm(ab), 1.0) / ng;
  const SymMat2 dh = (1.0 / s) * db;
  const SymMat2 gh = s * gb;

  SymMat2 xh;
  try {
    xh = care_subspace(ab, dh, gh, branch);
  } catch (const NumericalError&) {
    if (branch != CareBranch::Stabilizing) throw;
    xh = newton_from_scratch(ab, dh, gh);
  }
  xh = newton_polish(ab, dh, gh, xh, branch);
  if (!xh.is_finite() || !matches_branch(ab - xh.full() * gh.full(), branch)) {
    throw NumericalError(ErrorCode::NoStabilizingSolution, "closed-loop drift has the wrong stability");
  }
  return sc.grow(s * xh);
}

SymMat2 solve_care(const Mat2& a, const SymMat2& d, const Mat2& b, CareBranch branch) {
  return solve_care_gram(a, d, gram(b), branch);
}

SymMat2 solve_x2_gram(const Mat2& script_a, const SymMat2& bbt) {
  if (!is_hurwitz(script_a) && !is_anti_hurwitz(script_a)) {
    throw NumericalError(ErrorCode::NotHurwitz, "closed-loop drift is neither stable nor anti-stable");
  }
  // script_a^T X + X script_a - G = 0 is the Lyapunov form with A' = script_a^T.
  return solve_lyapunov_general(script_a.transposed(), -1.0 * bbt);
}

SymMat2 solve_x2(const Mat2& script_a, const Mat2& b) { return solve_x2_gram(script_a, gram(b)); }

SymMat2 solve_discrete_sylvester_general(const Mat2& f, const SymMat2& rhs) {
  DiagonalScaling sc = DiagonalScaling::for_covariance(rhs);
  if (sc.k == 1.0) sc = DiagonalScaling::for_drift(f);
  const Mat2 fb = sc.similar(f);
  const SymMat2 rb = sc.shrink(rhs);

  // Eigenvalues of S -> F S F^T are mu_i mu_j.
  const auto mu = eigenvalues(fb);
  const double gap = std::min({std::abs(1.0 - mu[0] * mu[0]), std::abs(1.0 - mu[0] * mu[1]),
                               std::abs(1.0 - mu[1] * mu[1])});
  if (gap <= 1e-15) {
    throw NumericalError(ErrorCode::SpectralRadiusGEOne, "cycle map has a unit eigenvalue product");
  }
  const Eigen::Matrix3d m = Eigen::Matrix3d::Identity() - congruence_matrix(fb);
  return sc.grow(from_vec3(solve3(m, to_vec3(rb))));
}

SymMat2 solve_discrete_sylvester(const Mat2& f, const SymMat2& rhs) {
  if (!(spectral_radius(f) < 1.0)) {
    throw NumericalError(ErrorCode::SpectralRadiusGEOne, "spectral radius of the cycle map is >= 1");
  }
  return solve_discrete_sylvester_general(f, rhs);
}

}  // namespace levisqueeze
