#pragma once

// Model-based ground truth for data-driven results: exact closed-loop costs
// from Lyapunov equations, strict suboptimality checks, the Riccati optimum
// and the model-based LMI counterparts of the data conditions.

#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "ddc/errors.hpp"
#include "ddc/h2.hpp"
#include "ddc/linalg.hpp"
#include "ddc/lqr.hpp"
#include "ddc/sdp.hpp"
#include "ddc/system_data.hpp"

namespace ddc {

struct VerificationReport {
  bool stable = false;
  double spectral_radius = 0.0;
  double cost = std::numeric_limits<double>::infinity();
  double gamma = 0.0;
  double difference = -std::numeric_limits<double>::infinity();  ///< γ − cost
  double lyapunov_residual = 0.0;
  std::optional<double> series_cost;  ///< truncated impulse/trajectory sum
  bool pass = false;
};

/// Strict comparison cost < γ with a relative slack of 1e-12.
inline bool strictly_below(double cost, double gamma) {
  return gamma - cost > 1e-12 * std::max(1.0, std::abs(gamma));
}

inline void require_gain_shape(const LtiSystem& sys, const Matrix& k) {
  if (k.rows() != sys.m() || k.cols() != sys.n()) {
    throw DimensionError("gain must be " + std::to_string(sys.m()) + "x" + std::to_string(sys.n()));
  }
}

/// x0ᵀPx0 with (A+BK)ᵀP(A+BK) − P + Q + KᵀRK = 0.
inline double lqr_cost(const LtiSystem& sys, const Matrix& k, const SymmetricMatrix& q,
                       const SymmetricMatrix& r, const Vector& x0) {
  require_gain_shape(sys, k);
  const Matrix acl = sys.A + sys.B * k;
  if (!is_schur_stable(acl, 0.0)) throw DomainError("lqr_cost: closed loop is not Schur stable");
  const SymmetricMatrix qcl(q.matrix() + k.transpose() * r.matrix() * k);
  const SymmetricMatrix p = solve_discrete_lyapunov(acl, qcl);
  return x0.dot(p.matrix() * x0);
}

inline Matrix closed_loop_output(const LtiSystem& sys, const Matrix& c, const Matrix& d,
                                 const Matrix& k) {
  return c + d * k;
}

/// trace(EᵀPE) with (A+BK)ᵀP(A+BK) − P + (C+DK)ᵀ(C+DK) = 0.
inline double h2_cost(const LtiSystem& sys, const Matrix& c, const Matrix& d, const Matrix& k) {
  require_gain_shape(sys, k);
  if (!sys.E) throw DimensionError("h2_cost: system has no disturbance matrix E");
  const Matrix acl = sys.A + sys.B * k;
  if (!is_schur_stable(acl, 0.0)) throw DomainError("h2_cost: closed loop is not Schur stable");
  const Matrix ccl = closed_loop_output(sys, c, d, k);
  const SymmetricMatrix p = solve_discrete_lyapunov(acl, SymmetricMatrix(ccl.transpose() * ccl));
  return (sys.E->transpose() * p.matrix() * *sys.E).trace();
}

inline double h2_cost(const LtiSystem& sys, const Matrix& k) {
  sys.require_output_pair();
  return h2_cost(sys, *sys.C, *sys.D, k);
}

/// Σ_t ‖(C+DK)(A+BK)ᵗE‖_F² truncated once ρ^{2t} ≤ 1e-16.
inline double h2_cost_impulse(const LtiSystem& sys, const Matrix& c, const Matrix& d,
                              const Matrix& k) {
  const Matrix acl = sys.A + sys.B * k;
  const double rho = spectral_radius(acl);
  if (!(rho < 1.0)) throw DomainError("h2_cost_impulse: closed loop is not Schur stable");
  const Matrix ccl = closed_loop_output(sys, c, d, k);
  const int horizon =
      rho < 1e-8 ? 4 * static_cast<int>(acl.rows()) + 4
                 : static_cast<int>(std::ceil(std::log(1e-16) / (2.0 * std::log(rho)))) +
                       4 * static_cast<int>(acl.rows()) + 4;
  Matrix state = *sys.E;
  double sum = 0.0;
  for (int t = 0; t <= horizon; ++t) {
    sum += (ccl * state).squaredNorm();
    state = acl * state;
  }
  return sum;
}

inline VerificationReport check_suboptimal_lqr(const LtiSystem& sys, const Matrix& k,
                                               const LqrSpec& spec) {
  if (!spec.gamma) throw SpecError("check_suboptimal_lqr: gamma required");
  require_gain_shape(sys, k);
  VerificationReport rep;
  rep.gamma = *spec.gamma;
  const Matrix acl = sys.A + sys.B * k;
  rep.spectral_radius = spectral_radius(acl);
  rep.stable = is_schur_stable(acl, 0.0);
  if (!rep.stable) return rep;
  const SymmetricMatrix qcl(spec.Q.matrix() + k.transpose() * spec.R.matrix() * k);
  const SymmetricMatrix p = solve_discrete_lyapunov(acl, qcl);
  rep.lyapunov_residual = lyapunov_residual(acl, qcl, p);
  rep.cost = spec.x0.dot(p.matrix() * spec.x0);
  rep.difference = rep.gamma - rep.cost;
  rep.pass = strictly_below(rep.cost, rep.gamma);
  return rep;
}

inline VerificationReport check_suboptimal_h2(const LtiSystem& sys, const Matrix& k,
                                              const H2Spec& spec) {
  require_gain_shape(sys, k);
  if (!sys.E) throw DimensionError("check_suboptimal_h2: system has no disturbance matrix E");
  VerificationReport rep;
  rep.gamma = spec.gamma;
  const Matrix acl = sys.A + sys.B * k;
  rep.spectral_radius = spectral_radius(acl);
  rep.stable = is_schur_stable(acl, 0.0);
  if (!rep.stable) return rep;
  const Matrix ccl = closed_loop_output(sys, spec.C, spec.D, k);
  const SymmetricMatrix qcl(ccl.transpose() * ccl);
  const SymmetricMatrix p = solve_discrete_lyapunov(acl, qcl);
  rep.lyapunov_residual = lyapunov_residual(acl, qcl, p);
  rep.cost = (sys.E->transpose() * p.matrix() * *sys.E).trace();
  if (rep.spectral_radius < 0.999) rep.series_cost = h2_cost_impulse(sys, spec.C, spec.D, k);
  rep.difference = rep.gamma - rep.cost;
  rep.pass = strictly_below(rep.cost, rep.gamma);
  return rep;
}

inline double optimal_lqr_cost(const LtiSystem& sys, const SymmetricMatrix& q,
                               const SymmetricMatrix& r, const Vector& x0) {
  const DareSolution sol = solve_dare(sys.A, sys.B, q, r);
  return x0.dot(sol.P.matrix() * x0);
}

namespace detail {

/// [[Y, (AY+BL)ᵀ, (C̃Y+D̃L)ᵀ], [AY+BL, Y, 0], [C̃Y+D̃L, 0, I]] with L = KY.
inline sdp::AffineMatrixInequality model_stability_block(const LtiSystem& sys, sdp::VarId y,
                                                         sdp::VarId l, const Matrix& c,
                                                         const Matrix& d) {
  const Eigen::Index n = sys.n();
  const Eigen::Index p = c.rows();
  const Matrix id = Matrix::Identity(n, n);
  sdp::BlockLmiBuilder b("model-stability", {n, n, p});
  b.add_congruence(y, 0, id);
  b.add(y, 1, 0, sys.A, id);
  b.add(l, 1, 0, sys.B, id);
  b.add_congruence(y, 1, id);
  b.add(y, 2, 0, c, id);
  b.add(l, 2, 0, d, id);
  b.set_constant(2, 2, Matrix::Identity(p, p));
  return b.build();
}

}  // namespace detail

/// Model-based LMI test for the existence of K with J(x0, K) < γ.
inline sdp::SolveResult prop1_lmi(const LtiSystem& sys, const LqrSpec& spec,
                                  const sdp::Settings& settings = {}) {
  if (!spec.gamma) throw SpecError("prop1_lmi: gamma required");
  const WeightFactors w = factor_weights(spec.Q, spec.R);
  const Eigen::Index n = sys.n();
  Matrix c = Matrix::Zero(w.C.rows() + w.D.rows(), n);
  Matrix d = Matrix::Zero(w.C.rows() + w.D.rows(), sys.m());
  c.topRows(w.C.rows()) = w.C;
  d.bottomRows(w.D.rows()) = w.D;
  sdp::SdpProblem p;
  const sdp::VarId y = p.layout.add_symmetric("Y", n);
  const sdp::VarId l = p.layout.add_general("L", sys.m(), n);
  p.inequalities.push_back(detail::model_stability_block(sys, y, l, c, d));
  sdp::BlockLmiBuilder cost("initial-state", {1, n});
  cost.set_constant(0, 0, Matrix::Constant(1, 1, *spec.gamma));
  cost.set_constant(1, 0, spec.x0);
  cost.add_congruence(y, 1, Matrix::Identity(n, n));
  p.inequalities.push_back(cost.build());
  return sdp::solve(p, settings);
}

/// Model-based LMI test for the existence of K with J_H2(K) < γ; with
/// `minimize` the trace bound is minimized instead of tested.
inline sdp::SolveResult prop2_lmi(const LtiSystem& sys, const H2Spec& spec, bool minimize = false,
                                  const sdp::Settings& settings = {}) {
  if (!sys.E) throw DimensionError("prop2_lmi: system has no disturbance matrix E");
  const Eigen::Index n = sys.n();
  const Eigen::Index dd = sys.d();
  sdp::SdpProblem p;
  const sdp::VarId y = p.layout.add_symmetric("Y", n);
  const sdp::VarId l = p.layout.add_general("L", sys.m(), n);
  const sdp::VarId yw = p.layout.add_symmetric("Yw", dd);
  p.inequalities.push_back(detail::model_stability_block(sys, y, l, spec.C, spec.D));
  sdp::BlockLmiBuilder coupling("disturbance-coupling", {dd, n});
  coupling.add_congruence(yw, 0, Matrix::Identity(dd, dd));
  coupling.set_constant(1, 0, *sys.E);
  coupling.add_congruence(y, 1, Matrix::Identity(n, n));
  p.inequalities.push_back(coupling.build());
  if (minimize) {
    p.objective = sdp::Objective{{{yw, Matrix::Identity(dd, dd)}}};
  } else {
    sdp::AffineMatrixInequality trace;
    trace.name = "trace";
    trace.constant = Matrix::Constant(1, 1, spec.gamma);
    for (Eigen::Index i = 0; i < dd; ++i) {
      const Matrix ei = Matrix::Identity(dd, dd).row(i);
      trace.terms.push_back({yw, -0.5 * ei, ei});
    }
    p.inequalities.push_back(trace);
  }
  return sdp::solve(p, settings);
}

}  // namespace ddc
