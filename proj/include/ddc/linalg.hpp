#pragma once

// Dense real matrix kernels: spectra, definiteness, Lyapunov and Riccati
// solvers, kernels and constrained right inverses.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "ddc/errors.hpp"

namespace ddc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) {
    throw DomainError(std::string(what) + ": non-finite entry");
  }
}

inline void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw DimensionError(std::string(what) + ": expected a square matrix, got " +
                         std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()));
  }
}

/// A real symmetric matrix. Construction symmetrizes its argument as
/// (M + Mᵀ)/2, so the stored value is exactly symmetric.
class SymmetricMatrix {
 public:
  SymmetricMatrix() = default;
  explicit SymmetricMatrix(const Matrix& m) {
    require_square(m, "SymmetricMatrix");
    value_ = 0.5 * (m + m.transpose());
  }

  static SymmetricMatrix identity(Eigen::Index n) {
    return SymmetricMatrix(Matrix::Identity(n, n));
  }
  static SymmetricMatrix zero(Eigen::Index n) {
    return SymmetricMatrix(Matrix::Zero(n, n));
  }

  Eigen::Index dim() const { return value_.rows(); }
  const Matrix& matrix() const { return value_; }
  operator const Matrix&() const { return value_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return value_(i, j); }

 private:
  Matrix value_;
};

/// Returns max |λ| over the eigenvalues of a square matrix.
inline double spectral_radius(const Matrix& m) {
  require_square(m, "spectral_radius");
  require_finite(m, "spectral_radius");
  if (m.size() == 0) return 0.0;
  if (m.rows() == 1) return std::abs(m(0, 0));
  Eigen::EigenSolver<Matrix> es(m, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) {
    // RealSchur allows 40 sweeps per row by default.
    throw NumericalError("spectral_radius: QR iteration did not converge within " +
                         std::to_string(40 * m.rows()) + " iterations");
  }
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Schur stability: spectral radius strictly below 1 - tol.
inline bool is_schur_stable(const Matrix& m, double tol = 1e-9) {
  return spectral_radius(m) < 1.0 - tol;
}

/// Smallest eigenvalue of a symmetric matrix; M ≻ εI iff the result exceeds ε.
inline double psd_margin(const SymmetricMatrix& m) {
  if (m.dim() == 0) return std::numeric_limits<double>::infinity();
  if (m.dim() == 1) return m(0, 0);
  Eigen::SelfAdjointEigenSolver<Matrix> es(m.matrix(), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    throw NumericalError("psd_margin: tridiagonal QL iteration did not converge");
  }
  return es.eigenvalues()(0);
}

inline double max_eigenvalue(const SymmetricMatrix& m) {
  if (m.dim() == 0) return -std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<Matrix> es(m.matrix(), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    throw NumericalError("max_eigenvalue: tridiagonal QL iteration did not converge");
  }
  return es.eigenvalues()(es.eigenvalues().size() - 1);
}

/// Relative singular-value threshold below which a singular value counts as
/// zero: σ < σ_max · max(rows, cols) · rank_rel_tol.
inline constexpr double kDefaultRankTolerance = 1e-12;

namespace detail {

inline double rank_threshold(const Vector& singular_values, Eigen::Index rows,
                             Eigen::Index cols, double rel_tol) {
  if (singular_values.size() == 0) return 0.0;
  return singular_values(0) * static_cast<double>(std::max(rows, cols)) * rel_tol;
}

inline Eigen::Index count_above(const Vector& sv, double threshold) {
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > threshold) ++r;
  }
  return r;
}

}  // namespace detail

inline Eigen::Index numerical_rank(const Matrix& m,
                                   double rel_tol = kDefaultRankTolerance) {
  if (m.size() == 0) return 0;
  Eigen::BDCSVD<Matrix> svd(m);
  const Vector& sv = svd.singularValues();
  return detail::count_above(sv, detail::rank_threshold(sv, m.rows(), m.cols(), rel_tol));
}

/// Orthonormal basis of the right null space of `m`, one basis vector per
/// column. Returns a cols×0 matrix when `m` has full column rank.
inline Matrix kernel_basis(const Matrix& m, double rel_tol = kDefaultRankTolerance) {
  const Eigen::Index cols = m.cols();
  if (cols == 0) return Matrix(0, 0);
  if (m.rows() == 0) return Matrix::Identity(cols, cols);
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeFullV);
  const Vector& sv = svd.singularValues();
  const Eigen::Index rank =
      detail::count_above(sv, detail::rank_threshold(sv, m.rows(), cols, rel_tol));
  return svd.matrixV().rightCols(cols - rank);
}

/// Orthonormal basis of the row space of `m` (columns of the result span
/// range(mᵀ)). Singular values at or below `abs_floor` are dropped as well.
inline Matrix row_space_basis(const Matrix& m, double rel_tol = kDefaultRankTolerance,
                              double abs_floor = 0.0) {
  const Eigen::Index cols = m.cols();
  if (m.rows() == 0 || cols == 0) return Matrix(cols, 0);
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeFullV);
  const Vector& sv = svd.singularValues();
  const Eigen::Index rank = detail::count_above(
      sv, std::max(abs_floor, detail::rank_threshold(sv, m.rows(), cols, rel_tol)));
  return svd.matrixV().leftCols(rank);
}

/// Minimum-norm least-squares solution X of a·X ≈ b.
inline Matrix min_norm_solve(const Matrix& a, const Matrix& b,
                             double rel_tol = kDefaultRankTolerance) {
  if (a.rows() != b.rows()) {
    throw DimensionError("min_norm_solve: row mismatch");
  }
  if (a.cols() == 0) return Matrix(0, b.cols());
  if (a.rows() == 0) return Matrix::Zero(a.cols(), b.cols());
  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double thr = detail::rank_threshold(sv, a.rows(), a.cols(), rel_tol);
  const Eigen::Index rank = detail::count_above(sv, thr);
  if (rank == 0) return Matrix::Zero(a.cols(), b.cols());
  Matrix ut_b = svd.matrixU().leftCols(rank).transpose() * b;
  for (Eigen::Index i = 0; i < rank; ++i) ut_b.row(i) /= sv(i);
  return svd.matrixV().leftCols(rank) * ut_b;
}

/// Finds G with M·G = I and Z·G = 0 (minimum-norm particular solution), or
/// nothing when the stacked system is inconsistent.
inline std::optional<Matrix> constrained_right_inverse(const Matrix& m, const Matrix& z,
                                                       double residual_tol = 1e-10) {
  if (m.cols() != z.cols() && z.rows() > 0) {
    throw DimensionError("constrained_right_inverse: M and Z need equal column counts");
  }
  const Eigen::Index p = m.rows();
  const Eigen::Index q = z.rows();
  const Eigen::Index t = m.cols();
  Matrix stacked(p + q, t);
  stacked.topRows(p) = m;
  if (q > 0) stacked.bottomRows(q) = z;
  Matrix rhs = Matrix::Zero(p + q, p);
  rhs.topRows(p).setIdentity();
  Matrix g = min_norm_solve(stacked, rhs);
  const double scale = std::max(1.0, stacked.norm() * g.norm());
  const double res_m = (m * g - Matrix::Identity(p, p)).norm();
  const double res_z = q > 0 ? (z * g).norm() : 0.0;
  if (res_m > residual_tol * scale || res_z > residual_tol * scale) return std::nullopt;
  return g;
}

namespace detail {

inline Matrix lyapunov_kronecker(const Matrix& a, const Matrix& q) {
  const Eigen::Index n = a.rows();
  const Eigen::Index nn = n * n;
  // vec(AᵀPA) = (Aᵀ ⊗ Aᵀ) vec(P), column-major vec.
  Matrix op = Matrix::Identity(nn, nn);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double aji = a(j, i);  // (Aᵀ)(i, j)
      if (aji == 0.0) continue;
      op.block(i * n, j * n, n, n) -= aji * a.transpose();
    }
  }
  Eigen::PartialPivLU<Matrix> lu(op);
  auto solve = [&](const Matrix& rhs) {
    Vector v = lu.solve(Eigen::Map<const Vector>(rhs.data(), nn));
    return Matrix(Eigen::Map<Matrix>(v.data(), n, n));
  };
  Matrix p = solve(q);
  // Two rounds of iterative refinement.
  for (int k = 0; k < 2; ++k) {
    Matrix r = a.transpose() * p * a - p + q;
    p += solve(r);
  }
  return p;
}

inline Matrix lyapunov_doubling(const Matrix& a, const Matrix& q) {
  Matrix p = q;
  Matrix ak = a;
  for (int k = 0; k < 64; ++k) {
    Matrix inc = ak.transpose() * p * ak;
    p += inc;
    ak = ak * ak;
    if (inc.norm() <= 1e-17 * std::max(1.0, p.norm()) || ak.norm() < 1e-300) break;
  }
  return p;
}

}  // namespace detail

/// Largest state dimension solved by a direct Kronecker solve; larger
/// instances use the squared-iterate doubling recursion.
inline constexpr Eigen::Index kLyapunovKroneckerLimit = 30;

/// Solves AᵀPA − P + Q = 0 for a Schur-stable A.
inline SymmetricMatrix solve_discrete_lyapunov(const Matrix& a, const SymmetricMatrix& q) {
  require_square(a, "solve_discrete_lyapunov");
  if (q.dim() != a.rows()) {
    throw DimensionError("solve_discrete_lyapunov: Q must match A");
  }
  require_finite(a, "solve_discrete_lyapunov");
  require_finite(q.matrix(), "solve_discrete_lyapunov");
  if (a.rows() == 0) return q;
  const double rho = spectral_radius(a);
  if (!(rho < 1.0)) {
    throw DomainError("solve_discrete_lyapunov: A is not Schur stable (spectral radius " +
                      std::to_string(rho) + ")");
  }
  Matrix p = a.rows() <= kLyapunovKroneckerLimit ? detail::lyapunov_kronecker(a, q.matrix())
                                                 : detail::lyapunov_doubling(a, q.matrix());
  if (!p.allFinite()) {
    throw NumericalError("solve_discrete_lyapunov: singular linear system");
  }
  return SymmetricMatrix(p);
}

inline double lyapunov_residual(const Matrix& a, const SymmetricMatrix& q,
                                const SymmetricMatrix& p) {
  return (a.transpose() * p.matrix() * a - p.matrix() + q.matrix()).norm();
}

struct DareSolution {
  SymmetricMatrix P;
  Matrix K;  ///< optimal gain, u = K x
  int iterations = 0;
  double residual = 0.0;
};

struct DareOptions {
  double tolerance = 1e-12;
  int max_iterations = 10000;
};

inline Matrix dare_residual_matrix(const Matrix& a, const Matrix& b, const Matrix& q,
                                   const Matrix& r, const Matrix& p) {
  const Matrix btpa = b.transpose() * p * a;
  const Matrix s = r + b.transpose() * p * b;
  return a.transpose() * p * a - p - btpa.transpose() * s.ldlt().solve(btpa) + q;
}

/// Solves the discrete algebraic Riccati equation
///   P = AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA + Q
/// by the plain Riccati recursion started at P₀ = Q.
inline DareSolution solve_dare(const Matrix& a, const Matrix& b, const SymmetricMatrix& q,
                               const SymmetricMatrix& r, const DareOptions& opts = {}) {
  require_square(a, "solve_dare");
  const Eigen::Index n = a.rows();
  if (b.rows() != n || q.dim() != n || r.dim() != b.cols()) {
    throw DimensionError("solve_dare: inconsistent dimensions");
  }
  if (psd_margin(r) <= 0.0) throw DomainError("solve_dare: R must be positive definite");

  Matrix p = q.matrix();
  double diff = std::numeric_limits<double>::infinity();
  int it = 0;
  for (; it < opts.max_iterations; ++it) {
    const Matrix btpa = b.transpose() * p * a;
    const Matrix s = r.matrix() + b.transpose() * p * b;
    Matrix next = a.transpose() * p * a - btpa.transpose() * s.ldlt().solve(btpa) + q.matrix();
    next = 0.5 * (next + next.transpose());
    if (!next.allFinite()) {
      throw ConvergenceError("solve_dare: Riccati recursion diverged", it + 1, diff);
    }
    diff = (next - p).stableNorm();
    const double scale = std::max(1.0, p.stableNorm());
    if (!std::isfinite(diff) || !std::isfinite(scale)) {
      throw ConvergenceError("solve_dare: Riccati recursion diverged", it + 1, diff);
    }
    p = std::move(next);
    if (diff <= opts.tolerance * scale) {
      ++it;
      break;
    }
  }
  if (!(diff <= opts.tolerance * std::max(1.0, p.stableNorm()))) {
    throw ConvergenceError("solve_dare: Riccati recursion did not converge within " +
                               std::to_string(opts.max_iterations) + " iterations",
                           opts.max_iterations, diff);
  }
  DareSolution sol;
  const Matrix s = r.matrix() + b.transpose() * p * b;
  sol.K = -s.ldlt().solve(b.transpose() * p * a);
  sol.P = SymmetricMatrix(p);
  sol.iterations = it;
  sol.residual = dare_residual_matrix(a, b, q.matrix(), r.matrix(), sol.P.matrix()).norm();
  return sol;
}

}  // namespace ddc
