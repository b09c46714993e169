#pragma once

// Data-driven H2 suboptimal control with measured disturbances.
//
// Condition (i): an admissible right inverse annihilates both W_- and the
// output data, so every explaining system is driven to zero output.
// Condition (ii): E is identified as X_+W_-^† and the data Lyapunov
// equation bounds trace(EᵀPE).

#include <optional>
#include <string>

#include "ddc/errors.hpp"
#include "ddc/linalg.hpp"
#include "ddc/lqr.hpp"
#include "ddc/sdp.hpp"
#include "ddc/system_data.hpp"

namespace ddc {

struct H2Spec {
  Matrix C;  ///< p×n
  Matrix D;  ///< p×m
  double gamma = 0.0;

  void validate(Eigen::Index n, Eigen::Index m) const {
    if (C.cols() != n || D.cols() != m || C.rows() != D.rows()) {
      throw DimensionError("H2Spec: expected C p×" + std::to_string(n) + " and D p×" +
                           std::to_string(m) + " with equal row counts");
    }
    require_finite(C, "H2Spec.C");
    require_finite(D, "H2Spec.D");
    if (!(gamma > 0.0)) throw SpecError("H2Spec: gamma must be positive");
  }

  Matrix output_data(const DataRecord& data) const {
    return C * data.x_minus() + D * data.u_minus();
  }
};

enum class H2Condition { I, II };

inline const char* to_string(H2Condition c) { return c == H2Condition::I ? "i" : "ii"; }

struct H2Certificate {
  H2Condition condition = H2Condition::I;
  Matrix theta;
  std::optional<Matrix> w_dagger;      ///< T×d, condition (ii)
  std::optional<Matrix> Y;             ///< d×d trace variable, condition (ii)
  std::optional<Matrix> P_from_data;   ///< solution of the data Lyapunov equation
  std::optional<Matrix> E_identified;  ///< X_+W_-^†
  double trace_bound = 0.0;            ///< trace(EᵀPE) from the data Lyapunov equation
  double lmi_trace = 0.0;              ///< trace(Y) at the solver's point
};

struct H2Outcome {
  sdp::Status status = sdp::Status::Inconclusive;
  std::optional<Controller> controller;
  std::optional<H2Certificate> certificate;
  SynthesisOutcome condition_i;
  std::optional<SynthesisOutcome> condition_ii;  ///< empty when not attempted
  std::string reason;

  bool found() const { return controller.has_value(); }
};

/// Stabilizing K = U_-X_-^† with W_-X_-^† = 0, valid for all explaining systems.
inline SynthesisOutcome stabilization_with_disturbance(const DataRecord& data,
                                                       const sdp::Settings& settings = {}) {
  const Matrix& w = data.w_minus_or_throw();
  const auto sp = detail::stabilization_problem(data, w, ThetaForm::Reduced);
  return detail::finish(sp, data, std::nullopt, settings, true);
}

inline SynthesisOutcome condition_i(const DataRecord& data, const H2Spec& spec,
                                    const sdp::Settings& settings = {}) {
  spec.validate(data.n(), data.m());
  const Matrix g = detail::vstack(data.w_minus_or_throw(), spec.output_data(data));
  const auto sp = detail::stabilization_problem(data, g, ThetaForm::Reduced);
  return detail::finish(sp, data, std::nullopt, settings, true);
}

/// W_-^† with W_-W_-^† = I and [X_-; U_-]W_-^† = 0 (minimum norm), if any.
inline std::optional<Matrix> disturbance_right_inverse(const DataRecord& data) {
  const Matrix& w = data.w_minus_or_throw();
  return constrained_right_inverse(w, detail::vstack(data.x_minus(), data.u_minus()));
}

struct ConditionIiOutcome {
  SynthesisOutcome synthesis;
  std::optional<Matrix> w_dagger;
  std::optional<Matrix> trace_variable;
};

inline ConditionIiOutcome condition_ii_detailed(const DataRecord& data, const H2Spec& spec,
                                                const sdp::Settings& settings = {}) {
  spec.validate(data.n(), data.m());
  ConditionIiOutcome out;
  out.w_dagger = disturbance_right_inverse(data);
  if (!out.w_dagger) {
    out.synthesis.status = sdp::Status::Infeasible;
    out.synthesis.reason = "no right inverse of W_- annihilating [X_-; U_-]: E is not identified";
    return out;
  }
  const Matrix& w = *data.w_minus();
  const Matrix z = spec.output_data(data);
  const Matrix e = data.x_plus() * *out.w_dagger;
  const Eigen::Index n = data.n();
  const Eigen::Index d = data.d();

  SynthesisProblem sp =
      detail::start_problem(data.x_minus(), w, detail::vstack(data.x_plus(), z), ThetaForm::Reduced);
  if (!sp.rank_deficient) {
    sp.problem.inequalities.push_back(detail::stability_block(sp.theta, data.x_plus(), z));
    const sdp::VarId yw = sp.problem.layout.add_symmetric("Yw", d);
    sdp::BlockLmiBuilder coupling("disturbance-coupling", {d, n});
    coupling.add_congruence(yw, 0, Matrix::Identity(d, d));
    coupling.set_constant(1, 0, e);
    sp.theta.add_y(coupling, 1);
    sp.problem.inequalities.push_back(coupling.build());
    sdp::AffineMatrixInequality trace;
    trace.name = "trace";
    trace.constant = Matrix::Constant(1, 1, spec.gamma);
    for (Eigen::Index i = 0; i < d; ++i) {
      const Matrix ei = Matrix::Identity(d, d).row(i);
      trace.terms.push_back({yw, -0.5 * ei, ei});
    }
    sp.problem.inequalities.push_back(trace);
  }
  out.synthesis = detail::finish(sp, data, std::nullopt, settings, true);
  if (out.synthesis.controller) out.trace_variable = out.synthesis.solver.assignment.at("Yw");
  return out;
}

inline SynthesisOutcome condition_ii(const DataRecord& data, const H2Spec& spec,
                                     const sdp::Settings& settings = {}) {
  return condition_ii_detailed(data, spec, settings).synthesis;
}

struct Theorem2Check {
  H2Condition condition = H2Condition::I;
  double right_inverse_residual = 0.0;  ///< ‖X_-X_-^† − I‖_F
  double w_residual = 0.0;              ///< ‖W_-X_-^†‖_F
  double closed_loop_radius = 0.0;      ///< ρ(X_+X_-^†)
  double output_residual = 0.0;         ///< ‖Z_-X_-^†‖_F, condition (i)
  double dagger_residual = 0.0;         ///< ‖[W_-; X_-; U_-]W_-^† − [I; 0; 0]‖_F, condition (ii)
  double trace_value = 0.0;             ///< trace((X_+W_-^†)ᵀP X_+W_-^†), condition (ii)
  Matrix P;                             ///< data Lyapunov solution
  bool holds = false;
};

/// Re-derives X_-^† = Θ(X_-Θ)⁻¹, solves the data Lyapunov equation and
/// checks the requirements of the condition named in the certificate.
inline Theorem2Check theorem2_check(const DataRecord& data, const H2Certificate& cert,
                                    const H2Spec& spec, double tol = 1e-8) {
  const Eigen::Index n = data.n();
  const Matrix& w = data.w_minus_or_throw();
  Theorem2Check out;
  out.condition = cert.condition;
  const Matrix y = data.x_minus() * cert.theta;
  Eigen::JacobiSVD<Matrix> svd(y);
  const Vector sv = svd.singularValues();
  if (sv.size() == 0 || sv(sv.size() - 1) <= 1e-14 * std::max(1e-300, sv(0))) {
    throw CertificateError("theorem2_check: X_-Theta is singular");
  }
  const Matrix xd = cert.theta * y.partialPivLu().inverse();
  out.right_inverse_residual = (data.x_minus() * xd - Matrix::Identity(n, n)).norm();
  out.w_residual = (w * xd).norm();
  const Matrix acl = data.x_plus() * xd;
  const Matrix zx = spec.output_data(data) * xd;
  out.output_residual = zx.norm();
  out.closed_loop_radius = spectral_radius(acl);
  const bool stable = out.closed_loop_radius < 1.0 - 1e-9;
  const bool common = out.right_inverse_residual <= tol && out.w_residual <= tol && stable;
  if (stable) {
    out.P = solve_discrete_lyapunov(acl, SymmetricMatrix(zx.transpose() * zx)).matrix();
  }
  if (cert.condition == H2Condition::I) {
    out.holds = common && out.output_residual <= tol;
    return out;
  }
  if (!cert.w_dagger) throw CertificateError("theorem2_check: condition (ii) needs W_-^dagger");
  const Matrix& wd = *cert.w_dagger;
  Matrix target = Matrix::Zero(w.rows() + n + data.m(), w.rows());
  target.topRows(w.rows()) = Matrix::Identity(w.rows(), w.rows());
  const Matrix stacked = detail::vstack(w, detail::vstack(data.x_minus(), data.u_minus()));
  out.dagger_residual = (stacked * wd - target).norm();
  if (!stable) return out;
  const Matrix e = data.x_plus() * wd;
  out.trace_value = (e.transpose() * out.P * e).trace();
  out.holds = common && out.dagger_residual <= tol && out.trace_value < spec.gamma;
  return out;
}

inline bool verify_theorem2_form(const DataRecord& data, const H2Certificate& cert,
                                 const H2Spec& spec, double tol = 1e-8) {
  return theorem2_check(data, cert, spec, tol).holds;
}

/// Tries condition (i), then condition (ii).
inline H2Outcome synthesize_h2(const DataRecord& data, const H2Spec& spec,
                               const sdp::Settings& settings = {}) {
  if (!data.has_w() || data.d() == 0) {
    throw SpecError("synthesize_h2: data carry no disturbance channel; use the LQR path");
  }
  spec.validate(data.n(), data.m());
  H2Outcome out;
  out.condition_i = condition_i(data, spec, settings);
  if (out.condition_i.controller) {
    out.status = sdp::Status::Feasible;
    out.controller = out.condition_i.controller;
    H2Certificate cert;
    cert.condition = H2Condition::I;
    cert.theta = out.controller->theta;
    out.certificate = cert;
    const auto chk = theorem2_check(data, cert, spec);
    out.certificate->P_from_data = chk.P;
    out.certificate->trace_bound = 0.0;
    out.controller->gamma = spec.gamma;
    out.reason = "condition (i) holds; condition (ii) not attempted";
    return out;
  }
  auto ii = condition_ii_detailed(data, spec, settings);
  out.condition_ii = ii.synthesis;
  if (ii.synthesis.controller) {
    out.status = sdp::Status::Feasible;
    out.controller = ii.synthesis.controller;
    out.controller->gamma = spec.gamma;
    H2Certificate cert;
    cert.condition = H2Condition::II;
    cert.theta = out.controller->theta;
    cert.w_dagger = ii.w_dagger;
    cert.Y = ii.trace_variable;
    cert.E_identified = data.x_plus() * *ii.w_dagger;
    cert.lmi_trace = ii.trace_variable->trace();
    const auto chk = theorem2_check(data, cert, spec);
    cert.P_from_data = chk.P;
    cert.trace_bound = chk.trace_value;
    out.certificate = cert;
    out.reason = "condition (ii) holds";
    return out;
  }
  const auto si = out.condition_i.status;
  const auto sii = ii.synthesis.status;
  out.status = (si == sdp::Status::Infeasible && sii == sdp::Status::Infeasible)
                   ? sdp::Status::Infeasible
                   : sdp::Status::Inconclusive;
  out.reason = std::string("condition (i): ") + sdp::to_string(si) + " (" +
               out.condition_i.reason + "); condition (ii): " + sdp::to_string(sii) + " (" +
               ii.synthesis.reason + ")";
  return out;
}

}  // namespace ddc
