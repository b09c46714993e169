#include <gtest/gtest.h>

#include "ddc/lqr.hpp"
#include "ddc/oracle.hpp"
#include "test_util.hpp"

namespace ddc {
namespace {

using testing::mat;
using testing::scalar;

constexpr double kScalarCost = 116.0 / 99.0;

DataRecord scalar_data() { return DataRecord::from_trajectory(mat({{1, 0.1}}), scalar(-0.4)); }

LqrSpec unit_spec(Eigen::Index n, Eigen::Index m, std::optional<double> gamma) {
  Vector x0(n);
  for (Eigen::Index i = 0; i < n; ++i) x0(i) = static_cast<double>(i + 1);
  return {SymmetricMatrix::identity(n), SymmetricMatrix::identity(m), x0, gamma};
}

LtiSystem scalar_system(double a, double b) {
  LtiSystem s;
  s.A = scalar(a);
  s.B = scalar(b);
  return s;
}

TEST(FactorWeights, Identity) {
  const auto w = factor_weights(SymmetricMatrix::identity(3), SymmetricMatrix::identity(2));
  EXPECT_EQ(w.C, Matrix::Identity(3, 3));
  EXPECT_EQ(w.D, Matrix::Identity(2, 2));
}

TEST(FactorWeights, RankDeficientDiagonal) {
  const auto w = factor_weights(SymmetricMatrix(mat({{4, 0}, {0, 0}})), SymmetricMatrix::identity(1));
  EXPECT_EQ(w.C, mat({{2, 0}}));
}

TEST(FactorWeights, ZeroQ) {
  const auto w = factor_weights(SymmetricMatrix::zero(2), SymmetricMatrix::identity(1));
  EXPECT_EQ(w.C.rows(), 0);
  const auto data = DataRecord::from_trajectory(mat({{1, 2, 3}, {0, 1, 0}}), mat({{1, -1}}));
  const Matrix z = weighted_output_data(data, w);
  EXPECT_EQ(z, data.u_minus());
}

TEST(FactorWeights, FullMatrixFactorReproduces) {
  CounterRng rng(3);
  const Matrix g = rng.uniform_matrix(3, 2, -1, 1);
  const SymmetricMatrix q(g * g.transpose());  // rank 2
  const SymmetricMatrix r(mat({{2, 0.5}, {0.5, 1}}));
  const auto w = factor_weights(q, r);
  EXPECT_EQ(w.C.rows(), 2);
  EXPECT_LE((w.C.transpose() * w.C - q.matrix()).norm(), 1e-12);
  EXPECT_LE((w.D.transpose() * w.D - r.matrix()).norm(), 1e-12);
}

TEST(FactorWeights, RejectsBadWeights) {
  EXPECT_THROW(factor_weights(SymmetricMatrix(mat({{1, 0}, {0, -1}})), SymmetricMatrix::identity(1)),
               SpecError);
  EXPECT_THROW(factor_weights(SymmetricMatrix::identity(1), SymmetricMatrix::zero(1)), SpecError);
}

TEST(BuildLqrLmis, ScalarMinimize) {
  const auto sp = build_lqr_lmis(scalar_data(), unit_spec(1, 1, std::nullopt), true);
  ASSERT_TRUE(sp.gamma);
  EXPECT_FALSE(sp.rank_deficient);
  ASSERT_GE(sp.problem.inequalities.size(), 2u);
  EXPECT_EQ(sp.problem.inequalities[0].size(), 2 * 1 + 2);  // 2n + p
  EXPECT_EQ(sp.problem.inequalities[1].size(), 1 + 1);      // n + 1
  // Θ ∈ R^{1×1} collapses onto Y; only (Y, γ) remain.
  EXPECT_EQ(sp.problem.layout.dimension(), 2);
  const auto res = sdp::solve(sp.problem);
  ASSERT_EQ(res.status, sdp::Status::Feasible);
  EXPECT_GT(res.assignment.at("Y")(0, 0), 0.0);
}

TEST(BuildLqrLmis, ShortDataCannotBeFeasible) {
  const auto data = DataRecord::from_trajectory(mat({{1, 0.5}, {0, 1}}), scalar(1.0));
  const auto sp = build_lqr_lmis(data, unit_spec(2, 1, 10.0), false);
  EXPECT_TRUE(sp.rank_deficient);
  // The explicit-equality form is still a valid problem; it must not be feasible.
  EXPECT_NE(sdp::solve(sp.problem).status, sdp::Status::Feasible);
  const auto out = synthesize_lqr(data, unit_spec(2, 1, 10.0));
  EXPECT_EQ(out.status, sdp::Status::Infeasible);
  EXPECT_NE(out.reason.find("rank"), std::string::npos);
}

TEST(BuildLqrLmis, ZeroStateWeightUsesInputRowsOnly) {
  LqrSpec spec{SymmetricMatrix::zero(1), SymmetricMatrix::identity(1), Vector::Ones(1), 5.0};
  const auto sp = build_lqr_lmis(scalar_data(), spec, false);
  EXPECT_EQ(sp.problem.inequalities[0].size(), 2 + 1);
}

TEST(SynthesizeLqr, ScalarFeasible) {
  const auto out = synthesize_lqr(scalar_data(), unit_spec(1, 1, 1.2));
  ASSERT_EQ(out.status, sdp::Status::Feasible) << out.reason;
  EXPECT_NEAR(out.controller->K(0, 0), -0.4, 1e-6);
  EXPECT_NEAR(lqr_cost(scalar_system(0.5, 1), out.controller->K, SymmetricMatrix::identity(1),
                       SymmetricMatrix::identity(1), Vector::Ones(1)),
              kScalarCost, 1e-3);
  EXPECT_LT(out.controller->cost_bound, 1.2);
}

TEST(SynthesizeLqr, ScalarBelowCost) {
  const auto out = synthesize_lqr(scalar_data(), unit_spec(1, 1, 1.1));
  EXPECT_EQ(out.status, sdp::Status::Infeasible) << out.reason;
  EXPECT_FALSE(out.found());
}

TEST(SynthesizeLqr, ForcedUnstableLoop) {
  const auto data = DataRecord::from_trajectory(mat({{1, 1.5}}), scalar(1.0));
  for (double g : {1.0, 100.0, 1e6}) {
    EXPECT_EQ(synthesize_lqr(data, unit_spec(1, 1, g)).status, sdp::Status::Infeasible);
  }
}

TEST(MinimizeGammaLqr, ScalarMatchesLyapunovCost) {
  const auto out = minimize_gamma_lqr(scalar_data(), SymmetricMatrix::identity(1),
                                      SymmetricMatrix::identity(1), Vector::Ones(1));
  ASSERT_EQ(out.status, sdp::Status::Feasible) << out.reason;
  EXPECT_NEAR(*out.controller->gamma, kScalarCost, 1e-3 * kScalarCost);
  EXPECT_GT(*out.controller->gamma, kScalarCost);
}

TEST(MinimizeGammaLqr, IdentifiableMatchesRiccati) {
  CounterRng rng(101);
  for (int k = 0; k < 5; ++k) {
    const Eigen::Index n = 2 + k % 3;
    const Eigen::Index m = 1 + k % 2;
    const auto sys = testing::random_system(rng, n, m);
    const auto data =
        simulate(sys, rng.uniform_matrix(n, 1, 0, 1), rng.uniform_matrix(m, n + m, 0, 1));
    ASSERT_TRUE(explanation_set(data).unique);
    const auto spec = unit_spec(n, m, std::nullopt);
    const auto out = minimize_gamma_lqr(data, spec.Q, spec.R, spec.x0);
    ASSERT_EQ(out.status, sdp::Status::Feasible) << out.reason;
    const double opt = optimal_lqr_cost(sys, spec.Q, spec.R, spec.x0);
    EXPECT_NEAR(*out.controller->gamma, opt, 0.01 * opt);
  }
}

TEST(MinimizeGammaLqr, RankDeficientIsAbsent) {
  const auto data = DataRecord::from_trajectory(mat({{1, 2, 4}, {1, 2, 4}}), mat({{1, 0}}));
  const auto out = minimize_gamma_lqr(data, SymmetricMatrix::identity(2),
                                      SymmetricMatrix::identity(1), Vector::Ones(2));
  EXPECT_FALSE(out.found());
  EXPECT_EQ(out.status, sdp::Status::Infeasible);
}

TEST(MinimizeGammaLqr, EqualityFormAgrees) {
  CounterRng rng(55);
  const auto sys = testing::random_system(rng, 3, 1);
  const auto data = simulate(sys, rng.uniform_matrix(3, 1, 0, 1), rng.uniform_matrix(1, 5, 0, 1));
  const auto spec = unit_spec(3, 1, std::nullopt);
  const auto reduced = sdp::solve(build_lqr_lmis(data, spec, true, ThetaForm::Reduced).problem);
  const auto equality = sdp::solve(build_lqr_lmis(data, spec, true, ThetaForm::Equality).problem);
  ASSERT_EQ(reduced.status, sdp::Status::Feasible) << reduced.message;
  ASSERT_EQ(equality.status, sdp::Status::Feasible) << equality.message;
  EXPECT_NEAR(reduced.objective, equality.objective, 1e-5 * reduced.objective);
}

TEST(VerifyTheorem1, SynthesisOutputHolds) {
  const auto spec = unit_spec(1, 1, 1.2);
  const auto out = synthesize_lqr(scalar_data(), spec);
  ASSERT_TRUE(out.found());
  const auto chk = theorem1_check(scalar_data(), *out.controller, spec);
  EXPECT_TRUE(chk.holds);
  // 0.01·P − P + 1 + 0.16 < 0 for P = 1/Y above 116/99
  const double p = 1.0 / out.controller->Y(0, 0);
  EXPECT_GT(p, kScalarCost);
  EXPECT_NEAR(chk.lyapunov_max_eigenvalue, 0.01 * p - p + 1.16, 1e-9);
}

TEST(VerifyTheorem1, NegatedCertificateFails) {
  const auto spec = unit_spec(1, 1, 1.2);
  auto c = *synthesize_lqr(scalar_data(), spec).controller;
  c.Y = -c.Y;
  EXPECT_FALSE(verify_theorem1_form(scalar_data(), c, spec));
}

TEST(VerifyTheorem1, SingularCertificateThrows) {
  const auto spec = unit_spec(1, 1, 1.2);
  auto c = *synthesize_lqr(scalar_data(), spec).controller;
  c.Y.setZero();
  EXPECT_THROW(theorem1_check(scalar_data(), c, spec), CertificateError);
}

TEST(Stabilization, IdentifiableControllable) {
  CounterRng rng(21);
  for (int k = 0; k < 5; ++k) {
    const Eigen::Index n = 2 + k % 3;
    const auto sys = testing::random_system(rng, n, 1);
    const auto data = simulate(sys, rng.uniform_matrix(n, 1, 0, 1), rng.uniform_matrix(1, n + 2, 0, 1));
    const auto out = stabilization_informativity(data);
    ASSERT_EQ(out.status, sdp::Status::Feasible) << out.reason;
    EXPECT_TRUE(is_schur_stable(sys.A + sys.B * out.controller->K));
  }
}

TEST(Stabilization, ForcedUnstable) {
  const auto data = DataRecord::from_trajectory(mat({{1, 1.5}}), scalar(1.0));
  const auto out = stabilization_informativity(data);
  EXPECT_FALSE(out.found());
  EXPECT_EQ(out.status, sdp::Status::Infeasible);
}

TEST(Stabilization, AutonomousStableRun) {
  LtiSystem sys;
  sys.A = mat({{0.5, 0.2}, {-0.1, 0.3}});
  sys.B = mat({{1}, {0}});
  const auto data = simulate(sys, Vector::Ones(2), Matrix::Zero(1, 3));
  const auto out = stabilization_informativity(data);
  ASSERT_EQ(out.status, sdp::Status::Feasible) << out.reason;
  EXPECT_LE(out.controller->K.norm(), 1e-12);
}

// Every returned controller must work for every system explaining the data.
TEST(SynthesizeLqr, SoundOverExplanationSet) {
  CounterRng rng(77);
  int found = 0;
  for (int k = 0; k < 12; ++k) {
    const Eigen::Index n = 1 + k % 3;
    const Eigen::Index m = 1 + k % 2;
    const auto sys = testing::random_system(rng, n, m);
    // Rank-deficient inputs half of the time so that Σ is not a single point.
    Matrix u = rng.uniform_matrix(m, n + m + 2, 0, 1);
    if (k % 2 == 1) u.row(0).setZero();
    const auto data = simulate(sys, rng.uniform_matrix(n, 1, 0, 1), u);
    auto spec = unit_spec(n, m, std::nullopt);
    const auto best = minimize_gamma_lqr(data, spec.Q, spec.R, spec.x0);
    if (!best.found()) continue;
    spec.gamma = 1.5 * *best.controller->gamma;
    const auto out = synthesize_lqr(data, spec);
    ASSERT_TRUE(out.found()) << out.reason;
    ++found;
    EXPECT_TRUE(verify_theorem1_form(data, *out.controller, spec));
    EXPECT_LE((data.x_minus() * out.controller->theta * out.controller->Y.inverse() -
               Matrix::Identity(n, n)).norm(),
              1e-8);
    for (const auto& s : sample_explanations(explanation_set(data), 20, static_cast<std::uint64_t>(k))) {
      EXPECT_TRUE(check_suboptimal_lqr(s, out.controller->K, spec).pass) << "instance " << k;
    }
  }
  EXPECT_GE(found, 6);
}

TEST(SynthesizeLqr, AgreesWithModelLmiWhenIdentifiable) {
  CounterRng rng(303);
  for (int k = 0; k < 4; ++k) {
    const Eigen::Index n = 2 + k % 2;
    const auto sys = testing::random_system(rng, n, 1);
    const auto data = simulate(sys, rng.uniform_matrix(n, 1, 0, 1), rng.uniform_matrix(1, n + 3, 0, 1));
    auto spec = unit_spec(n, 1, std::nullopt);
    const double opt = optimal_lqr_cost(sys, spec.Q, spec.R, spec.x0);
    for (double f : {1.05, 5.0, 0.95}) {
      spec.gamma = f * opt;
      const auto data_status = synthesize_lqr(data, spec).status;
      const auto model_status = prop1_lmi(sys, spec).status;
      EXPECT_EQ(data_status, model_status) << "factor " << f;
      EXPECT_EQ(data_status, f > 1.0 ? sdp::Status::Feasible : sdp::Status::Infeasible);
    }
  }
}

TEST(SynthesizeLqr, MonotoneInGamma) {
  CounterRng rng(404);
  const auto sys = testing::random_system(rng, 3, 1);
  const auto data = simulate(sys, rng.uniform_matrix(3, 1, 0, 1), rng.uniform_matrix(1, 5, 0, 1));
  auto spec = unit_spec(3, 1, std::nullopt);
  const double opt = optimal_lqr_cost(sys, spec.Q, spec.R, spec.x0);
  bool seen = false;
  for (double f : {0.5, 0.9, 1.01, 1.1, 2.0, 10.0}) {
    spec.gamma = f * opt;
    const bool ok = synthesize_lqr(data, spec).found();
    if (seen) EXPECT_TRUE(ok) << "factor " << f;
    seen = seen || ok;
  }
  EXPECT_TRUE(seen);
}

TEST(LqrSpec, Validation) {
  EXPECT_THROW(synthesize_lqr(scalar_data(), unit_spec(2, 1, 1.0)), DimensionError);
  LqrSpec bad = unit_spec(1, 1, -1.0);
  EXPECT_THROW(synthesize_lqr(scalar_data(), bad), SpecError);
}

}  // namespace
}  // namespace ddc
