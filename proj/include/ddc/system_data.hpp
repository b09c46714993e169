#pragma once

// Systems, measured data records, simulation and the set of systems that
// explain a data record.

#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "ddc/errors.hpp"
#include "ddc/linalg.hpp"
#include "ddc/random.hpp"

namespace ddc {

/// x(t+1) = A x(t) + B u(t) [+ E w(t)],  z(t) = C x(t) + D u(t).
struct LtiSystem {
  Matrix A;
  Matrix B;
  std::optional<Matrix> E;
  std::optional<Matrix> C;
  std::optional<Matrix> D;

  Eigen::Index n() const { return A.rows(); }
  Eigen::Index m() const { return B.cols(); }
  Eigen::Index d() const { return E ? E->cols() : 0; }

  void validate() const {
    require_square(A, "LtiSystem.A");
    if (B.rows() != n()) throw DimensionError("LtiSystem: B must have n rows");
    if (E && E->rows() != n()) throw DimensionError("LtiSystem: E must have n rows");
    if (C && C->cols() != n()) throw DimensionError("LtiSystem: C must have n columns");
    if (D && D->cols() != m()) throw DimensionError("LtiSystem: D must have m columns");
    if (C && D && C->rows() != D->rows()) {
      throw DimensionError("LtiSystem: C and D must have equal row counts");
    }
  }

  /// Performance output (C, D) for H2 use; both must be present.
  void require_output_pair() const {
    if (C.has_value() != D.has_value()) {
      throw SpecError("LtiSystem: C and D must be given together");
    }
    if (!C) throw SpecError("LtiSystem: performance output (C, D) missing");
  }
};

/// Measured input/state (and optionally disturbance) data.
///
/// Stores the shifted state partitions X_- and X_+ directly so that several
/// measured segments can be concatenated column-wise; a single trajectory has
/// exactly one segment and its full state matrix X is recoverable.
class DataRecord {
 public:
  DataRecord() = default;

  /// From one trajectory: X is n×(T+1), U is m×T, W (optional) is d×T.
  static DataRecord from_trajectory(const Matrix& x, const Matrix& u,
                                    std::optional<Matrix> w = std::nullopt) {
    if (x.cols() < 2) throw DimensionError("DataRecord: need at least two state samples (T >= 1)");
    const Eigen::Index t = x.cols() - 1;
    if (u.cols() != t) {
      throw DimensionError("DataRecord: U has " + std::to_string(u.cols()) +
                           " samples but X implies T = " + std::to_string(t));
    }
    if (w && w->cols() != t) {
      throw DimensionError("DataRecord: W has " + std::to_string(w->cols()) +
                           " samples but X implies T = " + std::to_string(t));
    }
    require_finite(x, "DataRecord.X");
    require_finite(u, "DataRecord.U");
    if (w) require_finite(*w, "DataRecord.W");
    DataRecord r;
    r.x_minus_ = x.leftCols(t);
    r.x_plus_ = x.rightCols(t);
    r.u_minus_ = u;
    r.w_minus_ = std::move(w);
    r.segments_ = {t};
    return r;
  }

  /// Column concatenation of several segments (all with or all without W).
  static DataRecord concatenate(const std::vector<DataRecord>& parts) {
    if (parts.empty()) throw DimensionError("DataRecord::concatenate: no segments");
    const auto& first = parts.front();
    Eigen::Index total = 0;
    for (const auto& p : parts) {
      if (p.n() != first.n() || p.m() != first.m() || p.has_w() != first.has_w() ||
          p.d() != first.d()) {
        throw DimensionError("DataRecord::concatenate: segment dimensions differ");
      }
      total += p.T();
    }
    DataRecord r;
    r.x_minus_.resize(first.n(), total);
    r.x_plus_.resize(first.n(), total);
    r.u_minus_.resize(first.m(), total);
    if (first.has_w()) r.w_minus_ = Matrix(first.d(), total);
    Eigen::Index c = 0;
    for (const auto& p : parts) {
      r.x_minus_.middleCols(c, p.T()) = p.x_minus_;
      r.x_plus_.middleCols(c, p.T()) = p.x_plus_;
      r.u_minus_.middleCols(c, p.T()) = p.u_minus_;
      if (first.has_w()) r.w_minus_->middleCols(c, p.T()) = *p.w_minus_;
      r.segments_.insert(r.segments_.end(), p.segments_.begin(), p.segments_.end());
      c += p.T();
    }
    return r;
  }

  Eigen::Index n() const { return x_minus_.rows(); }
  Eigen::Index m() const { return u_minus_.rows(); }
  Eigen::Index d() const { return w_minus_ ? w_minus_->rows() : 0; }
  Eigen::Index T() const { return x_minus_.cols(); }
  bool has_w() const { return w_minus_.has_value(); }

  const Matrix& x_minus() const { return x_minus_; }
  const Matrix& x_plus() const { return x_plus_; }
  const Matrix& u_minus() const { return u_minus_; }
  const std::optional<Matrix>& w_minus() const { return w_minus_; }
  const Matrix& w_minus_or_throw() const {
    if (!w_minus_) throw SpecError("DataRecord: disturbance data W_- required");
    return *w_minus_;
  }
  const std::vector<Eigen::Index>& segment_lengths() const { return segments_; }

  /// State samples of segment `k` (n × (T_k + 1)).
  Matrix segment_states(std::size_t k) const {
    const Eigen::Index start = segment_start(k);
    const Eigen::Index len = segments_.at(k);
    Matrix x(n(), len + 1);
    x.leftCols(len) = x_minus_.middleCols(start, len);
    x.col(len) = x_plus_.col(start + len - 1);
    return x;
  }
  Eigen::Index segment_start(std::size_t k) const {
    return std::accumulate(segments_.begin(), segments_.begin() + static_cast<long>(k),
                           Eigen::Index{0});
  }

  /// Full state matrix X for a single-segment record.
  Matrix states() const {
    if (segments_.size() != 1) {
      throw DimensionError("DataRecord::states: record has several segments");
    }
    return segment_states(0);
  }

  /// Leading `t` samples of a single-segment record.
  DataRecord prefix(Eigen::Index t) const {
    if (segments_.size() != 1 || t < 1 || t > T()) {
      throw DimensionError("DataRecord::prefix: invalid prefix length");
    }
    DataRecord r;
    r.x_minus_ = x_minus_.leftCols(t);
    r.x_plus_ = x_plus_.leftCols(t);
    r.u_minus_ = u_minus_.leftCols(t);
    if (w_minus_) r.w_minus_ = w_minus_->leftCols(t);
    r.segments_ = {t};
    return r;
  }

  /// [X_-; U_-] or [X_-; U_-; W_-] when disturbances were measured.
  Matrix stacked() const {
    Matrix s(n() + m() + d(), T());
    s.topRows(n()) = x_minus_;
    s.middleRows(n(), m()) = u_minus_;
    if (w_minus_) s.bottomRows(d()) = *w_minus_;
    return s;
  }

  /// Same record without disturbance rows.
  DataRecord without_w() const {
    DataRecord r = *this;
    r.w_minus_.reset();
    return r;
  }

 private:
  Matrix x_minus_;
  Matrix x_plus_;
  Matrix u_minus_;
  std::optional<Matrix> w_minus_;
  std::vector<Eigen::Index> segments_;
};

/// Simulates x(t+1) = A x(t) + B u(t) (+ E w(t)) from x0 over the given inputs.
inline DataRecord simulate(const LtiSystem& sys, const Vector& x0, const Matrix& inputs,
                           const std::optional<Matrix>& disturbances = std::nullopt) {
  sys.validate();
  if (x0.size() != sys.n()) throw DimensionError("simulate: x0 must have n entries");
  if (inputs.rows() != sys.m()) throw DimensionError("simulate: inputs must have m rows");
  if (disturbances.has_value() != sys.E.has_value()) {
    throw DimensionError("simulate: disturbances must be given exactly when E is present");
  }
  if (disturbances && (disturbances->rows() != sys.d() || disturbances->cols() != inputs.cols())) {
    throw DimensionError("simulate: disturbances must be d x T");
  }
  const Eigen::Index t = inputs.cols();
  Matrix x(sys.n(), t + 1);
  x.col(0) = x0;
  for (Eigen::Index k = 0; k < t; ++k) {
    x.col(k + 1) = sys.A * x.col(k) + sys.B * inputs.col(k);
    if (disturbances) x.col(k + 1) += *sys.E * disturbances->col(k);
  }
  return DataRecord::from_trajectory(x, inputs, disturbances);
}

/// Affine set of systems [A B (E)] with X_+ = [A B (E)]·stacked.
struct ExplanationSet {
  Matrix particular;  ///< n × (n+m+d), minimum-norm consistent system
  Matrix kernel;      ///< (n+m+d) × r; each column h satisfies hᵀ·stacked = 0
  bool unique = false;
  Eigen::Index n = 0, m = 0, d = 0;

  /// Splits a stacked [A B (E)] into a system.
  LtiSystem to_system(const Matrix& stacked_sys) const {
    LtiSystem s;
    s.A = stacked_sys.leftCols(n);
    s.B = stacked_sys.middleCols(n, m);
    if (d > 0) s.E = stacked_sys.rightCols(d);
    return s;
  }
  LtiSystem particular_system() const { return to_system(particular); }
};

inline constexpr double kDefaultConsistencyTolerance = 1e-9;

inline Matrix stack_system(const LtiSystem& sys, bool with_e) {
  const Eigen::Index q = sys.n() + sys.m() + (with_e ? sys.d() : 0);
  Matrix m(sys.n(), q);
  m.leftCols(sys.n()) = sys.A;
  m.middleCols(sys.n(), sys.m()) = sys.B;
  if (with_e && sys.E) m.rightCols(sys.d()) = *sys.E;
  return m;
}

inline ExplanationSet explanation_set(const DataRecord& data,
                                      double tol = kDefaultConsistencyTolerance,
                                      double rank_tol = kDefaultRankTolerance) {
  const Matrix s = data.stacked();
  ExplanationSet es;
  es.n = data.n();
  es.m = data.m();
  es.d = data.d();
  // Row-wise system M·S = X_+  <=>  Sᵀ·Mᵀ = X_+ᵀ.
  es.particular = min_norm_solve(s.transpose(), data.x_plus().transpose(), rank_tol).transpose();
  const double residual = (es.particular * s - data.x_plus()).norm();
  if (residual > tol * std::max(1.0, data.x_plus().norm())) {
    throw ConsistencyError("explanation_set: no system explains the data (residual " +
                               std::to_string(residual) + ")",
                           residual);
  }
  es.kernel = kernel_basis(s.transpose(), rank_tol);
  es.unique = es.kernel.cols() == 0;
  return es;
}

/// True iff ‖X_+ − [A B (E)]·stacked‖_F ≤ tol·max(1, ‖X_+‖_F).
inline bool explains(const LtiSystem& sys, const DataRecord& data,
                     double tol = kDefaultConsistencyTolerance) {
  if (sys.n() != data.n() || sys.m() != data.m()) {
    throw DimensionError("explains: system and data dimensions differ");
  }
  Matrix pred = sys.A * data.x_minus() + sys.B * data.u_minus();
  if (data.has_w()) {
    if (!sys.E || sys.d() != data.d()) {
      throw DimensionError("explains: data carry disturbances but system has no matching E");
    }
    pred += *sys.E * *data.w_minus();
  }
  return (data.x_plus() - pred).norm() <= tol * std::max(1.0, data.x_plus().norm());
}

/// The particular explanation plus `count - 1` systems shifted along the
/// homogeneous directions, coefficients uniform on [-10, 10].
inline std::vector<LtiSystem> sample_explanations(const ExplanationSet& es, int count,
                                                  std::uint64_t seed) {
  if (count < 1) throw DomainError("sample_explanations: count must be >= 1");
  std::vector<LtiSystem> out;
  out.reserve(static_cast<std::size_t>(count));
  out.push_back(es.particular_system());
  CounterRng rng(seed, /*stream=*/0x5a4d);
  for (int k = 1; k < count; ++k) {
    Matrix m = es.particular;
    if (!es.unique) {
      const Matrix coeff = rng.uniform_matrix(es.n, es.kernel.cols(), -10.0, 10.0);
      m += coeff * es.kernel.transpose();
    }
    out.push_back(es.to_system(m));
  }
  return out;
}

struct IdentifiabilityReport {
  Eigen::Index n = 0, m = 0, d = 0, T = 0;
  Eigen::Index rank_x_minus = 0;
  Eigen::Index rank_stacked = 0;
  bool right_inverse_exists = false;  ///< rank(X_-) = n
  bool unique = false;                ///< rank(stacked) = n + m (+ d)
};

inline IdentifiabilityReport identifiability_report(const DataRecord& data,
                                                    double rank_tol = kDefaultRankTolerance) {
  IdentifiabilityReport r;
  r.n = data.n();
  r.m = data.m();
  r.d = data.d();
  r.T = data.T();
  r.rank_x_minus = numerical_rank(data.x_minus(), rank_tol);
  r.rank_stacked = numerical_rank(data.stacked(), rank_tol);
  r.right_inverse_exists = r.rank_x_minus == r.n;
  r.unique = r.rank_stacked == r.n + r.m + r.d;
  return r;
}

}  // namespace ddc
