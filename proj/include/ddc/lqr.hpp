#pragma once

// Data-driven suboptimal LQR: informativity tests and gain synthesis.
//
// Decision variables follow the change of variables Y = P⁻¹, Θ = X_-^† Y.
// By default Θ is parameterized so that X_-Θ = Y holds identically:
//
//   Θ = P_Y·Y + P_V·V,   X_-·P_Y = I,   X_-·P_V = 0,
//
// with P_V further restricted to directions that actually move X_+Θ or the
// output data. ThetaForm::Equality keeps Θ as a plain T×n block with the
// equalities X_-Θ = (X_-Θ)ᵀ passed to the solver instead.

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ddc/errors.hpp"
#include "ddc/linalg.hpp"
#include "ddc/sdp.hpp"
#include "ddc/system_data.hpp"

namespace ddc {

struct LqrSpec {
  SymmetricMatrix Q;
  SymmetricMatrix R;
  Vector x0;
  std::optional<double> gamma;

  void validate(Eigen::Index n, Eigen::Index m) const {
    if (Q.dim() != n || R.dim() != m || x0.size() != n) {
      throw DimensionError("LqrSpec: expected Q " + std::to_string(n) + "x" + std::to_string(n) +
                           ", R " + std::to_string(m) + "x" + std::to_string(m) + ", x0 of length " +
                           std::to_string(n));
    }
    require_finite(Q.matrix(), "LqrSpec.Q");
    require_finite(R.matrix(), "LqrSpec.R");
    require_finite(x0, "LqrSpec.x0");
    if (psd_margin(Q) < -1e-10) throw SpecError("LqrSpec: Q must be positive semidefinite");
    if (!(psd_margin(R) > 0.0)) throw SpecError("LqrSpec: R must be positive definite");
    if (gamma && !(*gamma > 0.0)) throw SpecError("LqrSpec: gamma must be positive");
  }
};

/// Gain with its data certificate.
struct Controller {
  Matrix K;
  Matrix theta;  ///< T×n
  Matrix Y;      ///< n×n, X_-Θ
  std::optional<double> gamma;  ///< certified bound (fixed or minimized γ)
  double cost_bound = std::numeric_limits<double>::quiet_NaN();  ///< x0ᵀY⁻¹x0 when defined
};

struct SynthesisOutcome {
  sdp::Status status = sdp::Status::Inconclusive;
  std::optional<Controller> controller;
  std::string reason;
  sdp::SolveResult solver;

  bool found() const { return controller.has_value(); }
};

struct WeightFactors {
  Matrix C;  ///< p₁×n with CᵀC = Q
  Matrix D;  ///< p₂×m with DᵀD = R
};

namespace detail {

/// Factor S = FᵀF with rank(S) rows, dropping null directions.
inline Matrix psd_factor(const SymmetricMatrix& s, const char* what) {
  const Matrix& m = s.matrix();
  const Eigen::Index n = m.rows();
  if (n == 0) return Matrix(0, 0);
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if (m.isDiagonal(0.0)) {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (m(i, i) < -1e-10 * scale) throw SpecError(std::string(what) + " is indefinite");
      if (m(i, i) > 1e-14 * scale) keep.push_back(i);
    }
    Matrix f = Matrix::Zero(static_cast<Eigen::Index>(keep.size()), n);
    for (std::size_t r = 0; r < keep.size(); ++r) {
      f(static_cast<Eigen::Index>(r), keep[r]) = std::sqrt(m(keep[r], keep[r]));
    }
    return f;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.info() != Eigen::Success) throw NumericalError(std::string(what) + ": eigensolver failed");
  const Vector& lam = es.eigenvalues();
  if (lam.minCoeff() < -1e-10 * scale) throw SpecError(std::string(what) + " is indefinite");
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    if (lam(i) > 1e-14 * scale) keep.push_back(i);
  }
  Matrix f(static_cast<Eigen::Index>(keep.size()), n);
  for (std::size_t r = 0; r < keep.size(); ++r) {
    Vector v = es.eigenvectors().col(keep[r]);
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v(imax) < 0) v = -v;
    f.row(static_cast<Eigen::Index>(r)) = std::sqrt(lam(keep[r])) * v.transpose();
  }
  return f;
}

}  // namespace detail

inline WeightFactors factor_weights(const SymmetricMatrix& q, const SymmetricMatrix& r) {
  if (r.dim() > 0 && !(psd_margin(r) > 0.0)) throw SpecError("R must be positive definite");
  WeightFactors w;
  w.C = detail::psd_factor(q, "Q");
  w.D = detail::psd_factor(r, "R");
  return w;
}

/// Z_- = [C_w X_-; D_w U_-]: the stacked outputs have a vanishing cross term.
inline Matrix weighted_output_data(const DataRecord& data, const WeightFactors& w) {
  Matrix z(w.C.rows() + w.D.rows(), data.T());
  z.topRows(w.C.rows()) = w.C * data.x_minus();
  z.bottomRows(w.D.rows()) = w.D * data.u_minus();
  return z;
}

enum class ThetaForm { Reduced, Equality };

/// Θ = basis_y·Y + basis_v·V with X_-Θ = Y and G·Θ = 0 built in.
struct ThetaParameterization {
  Matrix basis_y;  ///< T×n
  Matrix basis_v;  ///< T×k
  Eigen::Index rank = 0;  ///< rank of X_- restricted to ker G
  bool full_rank = false;
};

/// `g` stacks equality rows (G·Θ = 0; may have zero rows); `influence`
/// stacks every data matrix that multiplies Θ in the inequalities.
inline ThetaParameterization parameterize_theta(const Matrix& x_minus, const Matrix& g,
                                                const Matrix& influence,
                                                double rank_tol = kDefaultRankTolerance) {
  const Eigen::Index n = x_minus.rows();
  const Eigen::Index t = x_minus.cols();
  ThetaParameterization p;
  const Matrix ng = g.rows() > 0 ? kernel_basis(g, rank_tol) : Matrix(Matrix::Identity(t, t));
  const Matrix xt = x_minus * ng;
  // Rank is judged against the scale of X_- itself: restricted to ker G the
  // product can be pure rounding, which is full rank relative to itself.
  if (xt.cols() == 0) {
    p.rank = 0;
    p.full_rank = n == 0;
    return p;
  }
  Eigen::BDCSVD<Matrix> xsvd(xt, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector& xs = xsvd.singularValues();
  const double xscale = x_minus.size() ? x_minus.jacobiSvd().singularValues()(0) : 0.0;
  const double xthresh = xscale * static_cast<double>(std::max(n, t)) * rank_tol;
  p.rank = 0;
  while (p.rank < xs.size() && xs(p.rank) > xthresh) ++p.rank;
  p.full_rank = p.rank == n;
  if (!p.full_rank) return p;
  // X̃⁺ = V_r Σ_r⁻¹ U_rᵀ and ker X̃ from the same decomposition.
  p.basis_y = ng * (xsvd.matrixV().leftCols(n) * xs.head(n).cwiseInverse().asDiagonal() *
                    xsvd.matrixU().leftCols(n).transpose());
  const Matrix nx = xsvd.matrixV().rightCols(xt.cols() - n);
  Matrix pv = ng * nx;
  if (pv.cols() > 0 && influence.rows() > 0) {
    // pv is orthonormal, so anything far below ‖influence‖ is rounding left
    // over from directions the data cannot move. The kept directions are
    // rescaled so they all move the inequalities equally; otherwise weakly
    // coupled directions wreck the conditioning of the Newton systems.
    const Matrix moved = influence * pv;
    const double floor = 1e-10 * std::max(1.0, influence.norm());
    Eigen::BDCSVD<Matrix> svd(moved, Eigen::ComputeFullV);
    const Vector& sv = svd.singularValues();
    Eigen::Index keep = 0;
    const double thresh =
        std::max(floor, sv.size() ? sv(0) * static_cast<double>(std::max(moved.rows(), moved.cols())) * rank_tol : 0.0);
    while (keep < sv.size() && sv(keep) > thresh) ++keep;
    Matrix scaled = svd.matrixV().leftCols(keep);
    for (Eigen::Index i = 0; i < keep; ++i) scaled.col(i) *= sv(0) / sv(i);
    pv = pv * scaled;
  } else {
    pv = Matrix(t, 0);
  }
  p.basis_v = pv;
  return p;
}

/// Θ as seen by the inequality builders, independent of the chosen form.
class ThetaModel {
 public:
  static ThetaModel reduced(const ThetaParameterization& param, sdp::DecisionLayout& layout) {
    ThetaModel m;
    m.form_ = ThetaForm::Reduced;
    m.param_ = param;
    m.n_ = param.basis_y.cols();
    m.y_ = layout.add_symmetric("Y", m.n_);
    if (param.basis_v.cols() > 0) m.v_ = layout.add_general("V", param.basis_v.cols(), m.n_);
    return m;
  }

  static ThetaModel equality(const Matrix& x_minus, const Matrix& g, sdp::SdpProblem& problem) {
    ThetaModel m;
    m.form_ = ThetaForm::Equality;
    m.n_ = x_minus.rows();
    m.x_minus_ = x_minus;
    const Eigen::Index t = x_minus.cols();
    m.theta_ = problem.layout.add_general("Theta", t, m.n_);
    if (g.rows() > 0) {
      problem.equalities.push_back(
          {"G*Theta=0", {{m.theta_, g, Matrix::Identity(m.n_, m.n_)}}, Matrix::Zero(g.rows(), m.n_)});
    }
    for (Eigen::Index j = 0; j < m.n_; ++j) {
      for (Eigen::Index i = 0; i < j; ++i) {
        const Matrix ei = Matrix::Identity(m.n_, m.n_).col(i);
        const Matrix ej = Matrix::Identity(m.n_, m.n_).col(j);
        problem.equalities.push_back({"sym(X-*Theta)",
                                      {{m.theta_, ei.transpose() * x_minus, ej},
                                       {m.theta_, -ej.transpose() * x_minus, ei}},
                                      Matrix::Zero(1, 1)});
      }
    }
    return m;
  }

  ThetaForm form() const { return form_; }
  Eigen::Index n() const { return n_; }
  const ThetaParameterization& parameterization() const { return param_; }

  /// Block (bi, bj) += M·Θ; bj must be an n-sized block.
  void add_product(sdp::BlockLmiBuilder& b, std::size_t bi, std::size_t bj, const Matrix& m) const {
    const Matrix id = Matrix::Identity(n_, n_);
    if (form_ == ThetaForm::Reduced) {
      b.add(y_, bi, bj, m * param_.basis_y, id);
      if (v_) b.add(*v_, bi, bj, m * param_.basis_v, id);
    } else {
      b.add(theta_, bi, bj, m, id);
    }
  }

  /// Diagonal block bi += sign·Y (Y = X_-Θ).
  void add_y(sdp::BlockLmiBuilder& b, std::size_t bi, double sign = 1.0) const {
    const Matrix id = Matrix::Identity(n_, n_);
    if (form_ == ThetaForm::Reduced) {
      b.add(y_, bi, bi, 0.5 * sign * id, id);
    } else {
      b.add(theta_, bi, bi, 0.5 * sign * x_minus_, id);
    }
  }

  /// (Θ, Y) from a solver assignment.
  std::pair<Matrix, Matrix> extract(const sdp::Assignment& a) const {
    if (form_ == ThetaForm::Reduced) {
      const Matrix& y = a.at("Y");
      Matrix theta = param_.basis_y * y;
      if (v_) theta += param_.basis_v * a.at("V");
      return {theta, y};
    }
    const Matrix& theta = a.at("Theta");
    const Matrix xy = x_minus_ * theta;
    return {theta, 0.5 * (xy + xy.transpose())};
  }

 private:
  ThetaForm form_ = ThetaForm::Reduced;
  Eigen::Index n_ = 0;
  ThetaParameterization param_;
  Matrix x_minus_;
  sdp::VarId y_, theta_;
  std::optional<sdp::VarId> v_;
};

/// K = U_-Θ·Y⁻¹ through a Cholesky solve; absent when Y is not positive definite.
inline std::optional<Matrix> gain_from_certificate(const Matrix& u_minus, const Matrix& theta,
                                                   const Matrix& y) {
  Eigen::LLT<Matrix> llt(0.5 * (y + y.transpose()));
  if (llt.info() != Eigen::Success) return std::nullopt;
  return Matrix(llt.solve((u_minus * theta).transpose()).transpose());
}

/// One assembled synthesis problem plus what is needed to read its solution.
struct SynthesisProblem {
  sdp::SdpProblem problem;
  ThetaModel theta;
  std::optional<sdp::VarId> gamma;
  bool rank_deficient = false;
  Eigen::Index rank = 0;
};

namespace detail {

/// Stability block [[Y, ΘᵀX_+ᵀ, ΘᵀZᵀ], [X_+Θ, Y, 0], [ZΘ, 0, I]] (Z row optional).
inline sdp::AffineMatrixInequality stability_block(const ThetaModel& th, const Matrix& x_plus,
                                                   const Matrix& z) {
  const Eigen::Index n = th.n();
  std::vector<Eigen::Index> sizes{n, n};
  if (z.rows() > 0) sizes.push_back(z.rows());
  sdp::BlockLmiBuilder b(z.rows() > 0 ? "stability+cost" : "stability", sizes);
  th.add_y(b, 0);
  th.add_product(b, 1, 0, x_plus);
  th.add_y(b, 1);
  if (z.rows() > 0) {
    th.add_product(b, 2, 0, z);
    b.set_constant(2, 2, Matrix::Identity(z.rows(), z.rows()));
  }
  return b.build();
}

/// I − Y ⪰ ε: fixes the scale of cone-shaped (homogeneous) problems.
inline sdp::AffineMatrixInequality normalization_block(const ThetaModel& th) {
  sdp::BlockLmiBuilder b("normalization", {th.n()});
  th.add_y(b, 0, -1.0);
  b.set_constant(0, 0, Matrix::Identity(th.n(), th.n()));
  return b.build();
}

/// Chooses the Θ form and adds the variables; the influence matrix lists
/// everything multiplying Θ in the inequalities.
inline SynthesisProblem start_problem(const Matrix& x_minus, const Matrix& g,
                                      const Matrix& influence, ThetaForm form) {
  SynthesisProblem sp;
  const ThetaParameterization param = parameterize_theta(x_minus, g, influence);
  sp.rank = param.rank;
  sp.rank_deficient = !param.full_rank;
  if (form == ThetaForm::Reduced && param.full_rank) {
    sp.theta = ThetaModel::reduced(param, sp.problem.layout);
  } else {
    sp.theta = ThetaModel::equality(x_minus, g, sp.problem);
  }
  return sp;
}

inline Matrix vstack(const Matrix& a, const Matrix& b) {
  if (a.rows() == 0) return b;
  if (b.rows() == 0) return a;
  Matrix out(a.rows() + b.rows(), a.cols());
  out << a, b;
  return out;
}

inline std::string rank_reason(Eigen::Index rank, Eigen::Index n, bool constrained) {
  return "rank of X_-" + std::string(constrained ? " on the constrained subspace" : "") + " is " +
         std::to_string(rank) + " < n = " + std::to_string(n) +
         ": no admissible right inverse exists";
}

/// Runs the solver and turns the result into a controller.
inline SynthesisOutcome finish(const SynthesisProblem& sp, const DataRecord& data,
                               const std::optional<Vector>& x0, const sdp::Settings& settings,
                               bool constrained) {
  SynthesisOutcome out;
  if (sp.rank_deficient) {
    out.status = sdp::Status::Infeasible;
    out.reason = rank_reason(sp.rank, data.n(), constrained);
    return out;
  }
  out.solver = sdp::solve(sp.problem, settings);
  out.status = out.solver.status;
  out.reason = out.solver.message;
  if (out.status != sdp::Status::Feasible) return out;
  auto [theta, y] = sp.theta.extract(out.solver.assignment);
  const auto k = gain_from_certificate(data.u_minus(), theta, y);
  if (!k) {
    out.status = sdp::Status::Inconclusive;
    out.reason = "solver returned a certificate with Y not positive definite";
    return out;
  }
  Controller c;
  c.K = *k;
  c.theta = std::move(theta);
  c.Y = std::move(y);
  if (sp.gamma) c.gamma = out.solver.assignment.at("gamma")(0, 0);
  if (x0) {
    Eigen::LLT<Matrix> llt(c.Y);
    c.cost_bound = x0->dot(llt.solve(*x0));
  }
  out.controller = std::move(c);
  return out;
}

/// Data-based stabilization with optional equality rows G·Θ = 0.
inline SynthesisProblem stabilization_problem(const DataRecord& data, const Matrix& g,
                                              ThetaForm form) {
  SynthesisProblem sp = start_problem(data.x_minus(), g, data.x_plus(), form);
  if (sp.rank_deficient && form == ThetaForm::Reduced) return sp;
  sp.problem.inequalities.push_back(stability_block(sp.theta, data.x_plus(), Matrix(0, data.T())));
  sp.problem.inequalities.push_back(normalization_block(sp.theta));
  return sp;
}

}  // namespace detail

/// Assembles the data LMIs: the stability/cost block, the initial-state
/// block and (through the Θ parameterization) X_-Θ = Y. With `minimize`
/// the scalar γ becomes a decision variable with objective γ.
inline SynthesisProblem build_lqr_lmis(const DataRecord& data, const LqrSpec& spec, bool minimize,
                                       ThetaForm form = ThetaForm::Reduced) {
  spec.validate(data.n(), data.m());
  if (!minimize && !spec.gamma) throw SpecError("build_lqr_lmis: gamma required");
  const WeightFactors w = factor_weights(spec.Q, spec.R);
  const Matrix z = weighted_output_data(data, w);
  const Eigen::Index n = data.n();

  SynthesisProblem sp =
      detail::start_problem(data.x_minus(), Matrix(0, data.T()), detail::vstack(data.x_plus(), z),
                            form);
  sp.problem.inequalities.push_back(detail::stability_block(sp.theta, data.x_plus(), z));

  sdp::BlockLmiBuilder cost("initial-state", {1, n});
  cost.set_constant(1, 0, spec.x0);
  sp.theta.add_y(cost, 1);
  if (minimize) {
    sp.gamma = sp.problem.layout.add_scalar("gamma");
    cost.add_congruence(*sp.gamma, 0, Matrix::Identity(1, 1));
    sdp::BlockLmiBuilder floor("gamma-floor", {1});
    floor.add_congruence(*sp.gamma, 0, Matrix::Identity(1, 1));
    floor.set_constant(0, 0, Matrix::Constant(1, 1, -1e-12)).margin(0.0);
    sp.problem.inequalities.push_back(cost.build());
    sp.problem.inequalities.push_back(floor.build());
    sp.problem.objective = sdp::Objective{{{*sp.gamma, Matrix::Identity(1, 1)}}};
  } else {
    cost.set_constant(0, 0, Matrix::Constant(1, 1, *spec.gamma));
    sp.problem.inequalities.push_back(cost.build());
  }
  return sp;
}

/// Fixed-γ synthesis: K = U_-Θ(X_-Θ)⁻¹ for every system explaining the data.
inline SynthesisOutcome synthesize_lqr(const DataRecord& data, const LqrSpec& spec,
                                       const sdp::Settings& settings = {}) {
  if (!spec.gamma) throw SpecError("synthesize_lqr: gamma required");
  const SynthesisProblem sp = build_lqr_lmis(data, spec, false);
  SynthesisOutcome out = detail::finish(sp, data, spec.x0, settings, false);
  if (out.controller) out.controller->gamma = *spec.gamma;
  return out;
}

/// Minimizes γ over the data LMIs; the controller carries the achieved γ.
inline SynthesisOutcome minimize_gamma_lqr(const DataRecord& data, const SymmetricMatrix& q,
                                           const SymmetricMatrix& r, const Vector& x0,
                                           const sdp::Settings& settings = {}) {
  LqrSpec spec{q, r, x0, std::nullopt};
  const SynthesisProblem sp = build_lqr_lmis(data, spec, true);
  return detail::finish(sp, data, x0, settings, false);
}

/// Stabilizing gain for every system explaining the data (no cost).
inline SynthesisOutcome stabilization_informativity(const DataRecord& data,
                                                    const sdp::Settings& settings = {}) {
  const auto sp = detail::stabilization_problem(data, Matrix(0, data.T()), ThetaForm::Reduced);
  return detail::finish(sp, data, std::nullopt, settings, false);
}

struct Theorem1Check {
  double right_inverse_residual = 0.0;      ///< ‖X_-X_-^† − I‖_F
  double lyapunov_max_eigenvalue = 0.0;     ///< λ_max of the Lyapunov-type matrix
  double cost_value = 0.0;                  ///< x0ᵀPx0
  bool positive_definite = false;           ///< Y ≻ 0
  bool holds = false;
};

/// Rebuilds X_-^† = ΘY⁻¹ and P = Y⁻¹ and checks the non-convex
/// characterization: right inverse, strict Lyapunov inequality, cost bound.
inline Theorem1Check theorem1_check(const DataRecord& data, const Controller& c,
                                    const LqrSpec& spec, double tol = 1e-8) {
  const Eigen::Index n = data.n();
  if (c.Y.rows() != n || c.theta.rows() != data.T()) {
    throw DimensionError("theorem1_check: certificate does not match the data");
  }
  Theorem1Check out;
  const Matrix y = 0.5 * (c.Y + c.Y.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(y);
  const Vector lam = es.eigenvalues();
  const double scale = std::max(1e-300, lam.cwiseAbs().maxCoeff());
  if (lam.cwiseAbs().minCoeff() <= 1e-14 * scale) {
    throw CertificateError("theorem1_check: Y is singular");
  }
  out.positive_definite = lam.minCoeff() > 0.0;
  const Matrix y_inv = es.eigenvectors() * lam.cwiseInverse().asDiagonal() *
                       es.eigenvectors().transpose();
  const Matrix xd = c.theta * y_inv;
  const Matrix p = 0.5 * (y_inv + y_inv.transpose());
  out.right_inverse_residual = (data.x_minus() * xd - Matrix::Identity(n, n)).norm();
  const Matrix acl = data.x_plus() * xd;
  const Matrix kk = data.u_minus() * xd;
  const Matrix m = acl.transpose() * p * acl - p + spec.Q.matrix() + kk.transpose() * spec.R.matrix() * kk;
  out.lyapunov_max_eigenvalue = max_eigenvalue(SymmetricMatrix(m));
  out.cost_value = spec.x0.dot(p * spec.x0);
  const double gamma = spec.gamma ? *spec.gamma : c.gamma.value_or(0.0);
  out.holds = out.positive_definite && out.right_inverse_residual <= tol &&
              out.lyapunov_max_eigenvalue < 0.0 && out.cost_value < gamma;
  return out;
}

inline bool verify_theorem1_form(const DataRecord& data, const Controller& c, const LqrSpec& spec,
                                 double tol = 1e-8) {
  return theorem1_check(data, c, spec, tol).holds;
}

}  // namespace ddc
