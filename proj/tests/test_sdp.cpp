#include <gtest/gtest.h>

#include "ddc/sdp.hpp"
#include "test_util.hpp"

namespace ddc::sdp {
namespace {

using ddc::testing::mat;
using ddc::testing::scalar;

// [[x, 1], [1, x]] ⪰ eps·I
SdpProblem two_by_two(double eps, bool minimize) {
  SdpProblem p;
  const VarId x = p.layout.add_scalar("x");
  AffineMatrixInequality lmi;
  lmi.name = "pair";
  lmi.constant = mat({{0, 1}, {1, 0}});
  lmi.terms.push_back({x, 0.5 * Matrix::Identity(2, 2).col(0), Matrix::Identity(2, 2).col(0)});
  lmi.terms.push_back({x, 0.5 * Matrix::Identity(2, 2).col(1), Matrix::Identity(2, 2).col(1)});
  lmi.margin = eps;
  p.inequalities.push_back(lmi);
  if (minimize) p.objective = Objective{{{x, scalar(1.0)}}};
  return p;
}

// diag(x, shift − x) ⪰ eps·I
SdpProblem split_problem(double shift, double eps) {
  SdpProblem p;
  const VarId x = p.layout.add_scalar("x");
  AffineMatrixInequality lmi;
  lmi.name = "split";
  lmi.constant = mat({{0, 0}, {0, shift}});
  lmi.terms.push_back({x, mat({{0.5}, {0}}), mat({{1}, {0}})});
  lmi.terms.push_back({x, mat({{0}, {-0.5}}), mat({{0}, {1}})});
  lmi.margin = eps;
  p.inequalities.push_back(lmi);
  return p;
}

TEST(Solve, ObjectiveWithActiveMargin) {
  const double eps = 1e-6;
  const auto res = solve(two_by_two(eps, true));
  ASSERT_EQ(res.status, Status::Feasible) << res.message;
  // λ_min = x − 1 ≥ eps  ⟹  x* = 1 + eps
  EXPECT_NEAR(res.objective, 1.0 + eps, 1e-6);
  EXPECT_NEAR(res.assignment.at("x")(0, 0), 1.0 + eps, 1e-6);
  // brute force over a grid
  double best = 1e9;
  for (int i = 0; i <= 40000; ++i) {
    const double x = 0.9 + i * 5e-6;
    if (psd_margin(SymmetricMatrix(mat({{x, 1}, {1, x}}))) >= eps) best = std::min(best, x);
  }
  EXPECT_NEAR(res.objective, best, 1e-5);
}

TEST(Solve, Infeasible) {
  const auto res = solve(split_problem(-1.0, 0.0));
  EXPECT_EQ(res.status, Status::Infeasible) << res.message;
  EXPECT_LT(res.margin_bound, 0.0);
}

TEST(Solve, EmptyProblem) {
  SdpProblem p;
  p.layout.add_scalar("x");
  p.objective = Objective{};
  const auto res = solve(p);
  EXPECT_EQ(res.status, Status::Feasible);
  EXPECT_EQ(res.objective, 0.0);
}

TEST(Solve, FeasibilityReturnsCheckablePoint) {
  const auto p = split_problem(1.0, 0.0);  // 0 < x < 1
  const auto res = solve(p);
  ASSERT_EQ(res.status, Status::Feasible) << res.message;
  const double x = res.assignment.at("x")(0, 0);
  EXPECT_GT(x, 0.0);
  EXPECT_LT(x, 1.0);
  EXPECT_TRUE(check_point(p, res.assignment).feasible);
}

TEST(CheckPoint, ScalarExample) {
  const auto p = two_by_two(0.0, false);
  const auto d = check_point(p, {{"x", scalar(2.0)}});
  ASSERT_EQ(d.margins.size(), 1u);
  EXPECT_NEAR(d.margins[0], 1.0, 1e-14);
  EXPECT_TRUE(d.feasible);
}

TEST(CheckPoint, PerturbedPointFails) {
  const auto p = two_by_two(1e-3, true);
  const auto res = solve(p);
  ASSERT_EQ(res.status, Status::Feasible);
  EXPECT_TRUE(check_point(p, res.assignment).feasible);
  Assignment bad = res.assignment;
  bad["x"](0, 0) -= 2e-3;
  EXPECT_FALSE(check_point(p, bad).feasible);
}

TEST(CheckPoint, MissingBlockThrows) {
  EXPECT_THROW(check_point(two_by_two(0.0, false), {}), DimensionError);
}

TEST(Solve, MonotoneInEps) {
  // Family 0 < x < w: feasible iff w/2 ≥ eps.
  for (double w : {0.01, 0.1, 1.0}) {
    Status prev = Status::Infeasible;
    for (double eps : {0.2, 0.04, 1e-3, 1e-6, 0.0}) {
      const auto res = solve(split_problem(w, eps));
      if (prev == Status::Feasible) {
        EXPECT_EQ(res.status, Status::Feasible) << "w=" << w << " eps=" << eps;
      }
      if (eps * 2 < w * 0.99) {
        EXPECT_EQ(res.status, Status::Feasible) << "w=" << w << " eps=" << eps;
      } else if (eps * 2 > w * 1.01) {
        EXPECT_EQ(res.status, Status::Infeasible) << "w=" << w << " eps=" << eps;
      }
      prev = res.status;
    }
  }
}

TEST(Solve, EqualitiesAreEliminated) {
  // minimize trace(Y) subject to Y ⪰ I and Y(0,1) = 0.5
  SdpProblem p;
  const VarId y = p.layout.add_symmetric("Y", 2);
  BlockLmiBuilder b("Y>=I", {2});
  b.add_congruence(y, 0, Matrix::Identity(2, 2)).set_constant(0, 0, -Matrix::Identity(2, 2));
  b.margin(0.0);
  p.inequalities.push_back(b.build());
  p.equalities.push_back({"offdiag", {{y, mat({{1, 0}}), mat({{0}, {1}})}}, scalar(0.5)});
  p.objective = Objective{{{y, Matrix::Identity(2, 2)}}};
  const auto res = solve(p);
  ASSERT_EQ(res.status, Status::Feasible) << res.message;
  // Y − I = [[a, .5], [.5, b]] ⪰ 0, min a + b ⟹ a = b = 0.5
  EXPECT_NEAR(res.objective, 3.0, 1e-6);
  EXPECT_NEAR(res.assignment.at("Y")(0, 1), 0.5, 1e-8);
}

TEST(Solve, InconsistentEqualities) {
  SdpProblem p;
  const VarId x = p.layout.add_scalar("x");
  p.equalities.push_back({"a", {{x, scalar(1), scalar(1)}}, scalar(1)});
  p.equalities.push_back({"b", {{x, scalar(1), scalar(1)}}, scalar(2)});
  BlockLmiBuilder b("x", {1});
  b.add_congruence(x, 0, scalar(1));
  p.inequalities.push_back(b.build());
  EXPECT_EQ(solve(p).status, Status::Infeasible);
}

TEST(Solve, IterationLimitIsInconclusive) {
  Settings s;
  s.max_iterations = 2;
  const auto res = solve(two_by_two(1e-6, true), s);
  EXPECT_EQ(res.status, Status::Inconclusive);
}

TEST(Solve, LyapunovLmiMatchesEquation) {
  // minimize trace(P) s.t. P − AᵀPA − I ⪰ 0: optimum is the Lyapunov solution.
  CounterRng rng(31);
  const Matrix a = ddc::testing::random_with_radius(rng, 3, 0.7);
  SdpProblem p;
  const VarId pv = p.layout.add_symmetric("P", 3);
  BlockLmiBuilder b("lyap", {3});
  b.add_congruence(pv, 0, Matrix::Identity(3, 3));
  b.add(pv, 0, 0, -0.5 * a.transpose(), a.transpose());
  b.set_constant(0, 0, -Matrix::Identity(3, 3)).margin(0.0);
  p.inequalities.push_back(b.build());
  p.objective = Objective{{{pv, Matrix::Identity(3, 3)}}};
  const auto res = solve(p);
  ASSERT_EQ(res.status, Status::Feasible) << res.message;
  const auto exact = solve_discrete_lyapunov(a, SymmetricMatrix::identity(3));
  EXPECT_NEAR(res.objective, exact.matrix().trace(), 1e-6 * exact.matrix().trace());
}

// Finite-difference check of the barrier gradient and Hessian on a random
// problem with symmetric and general blocks sharing one inequality.
TEST(Barrier, DerivativesMatchFiniteDifferences) {
  CounterRng rng(41);
  SdpProblem p;
  const VarId y = p.layout.add_symmetric("Y", 3);
  const VarId v = p.layout.add_general("V", 2, 3);
  const VarId g = p.layout.add_scalar("g");
  BlockLmiBuilder b("mix", {3, 2, 1});
  b.add_congruence(y, 0, Matrix::Identity(3, 3));
  b.add(v, 1, 0, rng.uniform_matrix(2, 2, -1, 1), Matrix::Identity(3, 3));
  b.add(y, 1, 0, rng.uniform_matrix(2, 3, -0.2, 0.2), Matrix::Identity(3, 3));
  b.add(v, 2, 1, rng.uniform_matrix(1, 2, -1, 1), rng.uniform_matrix(2, 3, -1, 1));
  b.add_congruence(g, 2, scalar(1.0));
  b.set_constant(1, 1, 4.0 * Matrix::Identity(2, 2));
  p.inequalities.push_back(b.build());
  BlockLmiBuilder b2("second", {2});
  b2.add(v, 0, 0, rng.uniform_matrix(2, 2, -1, 1), rng.uniform_matrix(2, 3, -1, 1));
  b2.set_constant(0, 0, 3.0 * Matrix::Identity(2, 2));
  p.inequalities.push_back(b2.build());

  Settings s;
  s.ball_radius = 15.0;
  detail::BarrierSolver solver(p, s);
  const Index n = p.layout.dimension();
  Vector x = Vector::Zero(n);
  p.layout.pack(5.0 * Matrix::Identity(3, 3), y, x);
  p.layout.pack(0.1 * rng.uniform_matrix(2, 3, -1, 1), v, x);
  p.layout.pack(scalar(6.0), g, x);
  const double t = -0.3;
  const double tau = 0.7;

  for (bool phase1 : {false, true}) {
    std::vector<detail::LmiEval> ev;
    ASSERT_TRUE(solver.evaluate_all(x, phase1 ? t : 0.0, ev));
    Vector grad;
    Matrix hess;
    solver.derivatives(x, t, phase1, tau, ev, grad, hess);
    const Index dim = n + (phase1 ? 1 : 0);
    auto value = [&](const Vector& v) {
      return solver.barrier(v.head(n), phase1 ? v(n) : 0.0, phase1, tau);
    };
    auto gradient = [&](const Vector& v) {
      std::vector<detail::LmiEval> e;
      EXPECT_TRUE(solver.evaluate_all(v.head(n), phase1 ? v(n) : 0.0, e));
      Vector gr;
      Matrix h;
      solver.derivatives(v.head(n), phase1 ? v(n) : 0.0, phase1, tau, e, gr, h);
      return gr;
    };
    Vector base(dim);
    base.head(n) = x;
    if (phase1) base(n) = t;
    const double h = 1e-6;
    for (Index i = 0; i < dim; ++i) {
      Vector xp = base, xm = base;
      xp(i) += h;
      xm(i) -= h;
      const double fd = (value(xp) - value(xm)) / (2 * h);
      EXPECT_NEAR(grad(i), fd, 1e-6 * std::max(1.0, std::abs(fd))) << "grad " << i;
      const Vector hcol = (gradient(xp) - gradient(xm)) / (2 * h);
      for (Index j = 0; j < dim; ++j) {
        EXPECT_NEAR(hess(j, i), hcol(j), 1e-5 * std::max(1.0, std::abs(hcol(j))))
            << "hess " << j << "," << i << " phase1=" << phase1;
      }
    }
  }
}

TEST(Layout, PackUnpackRoundTrip) {
  DecisionLayout layout;
  const VarId y = layout.add_symmetric("Y", 3);
  const VarId v = layout.add_general("V", 2, 4);
  EXPECT_EQ(layout.dimension(), 6 + 8);
  EXPECT_THROW(layout.add_scalar("Y"), DimensionError);
  Vector x = Vector::Zero(layout.dimension());
  const Matrix ym = mat({{1, 2, 3}, {2, 4, 5}, {3, 5, 6}});
  const Matrix vm = mat({{1, 2, 3, 4}, {5, 6, 7, 8}});
  layout.pack(ym, y, x);
  layout.pack(vm, v, x);
  EXPECT_EQ(layout.unpack(x, y), ym);
  EXPECT_EQ(layout.unpack(x, v), vm);
}

}  // namespace
}  // namespace ddc::sdp
