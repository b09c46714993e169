#pragma once

// Leader-steered consensus benchmark: x(t+1) = (I − cL)x(t) + Bu(t), with the
// sample size swept and the data-driven minimum γ recorded per trial.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ddc/errors.hpp"
#include "ddc/linalg.hpp"
#include "ddc/lqr.hpp"
#include "ddc/oracle.hpp"
#include "ddc/random.hpp"
#include "ddc/sdp.hpp"
#include "ddc/system_data.hpp"

namespace ddc::consensus {

using Edge = std::pair<int, int>;

/// Tuned for the 20-node sweep: larger barrier steps and a looser gap cut
/// the Newton count by a third while γ stays within a few ppm.
inline sdp::Settings default_bench_solver() {
  sdp::Settings s;
  s.barrier_growth = 50.0;
  s.tol = 1e-7;
  return s;
}

// Nodes are labelled 1..n in edges and leaders, like the x0 rule.
struct BenchConfig {
  int nodes = 20;
  std::vector<Edge> edges;         ///< empty with generate_graph: drawn from graph_seed
  bool generate_graph = true;
  int extra_edges = 20;            ///< on top of a random spanning tree
  std::uint64_t graph_seed = 1;
  double coupling = 0.15;
  std::vector<int> leaders;        ///< default: the first `default_leaders` nodes
  int default_leaders = 10;
  std::optional<Matrix> Q;         ///< default identity
  std::optional<Matrix> R;         ///< default identity
  std::optional<Vector> x0;        ///< default (x0)_i = i, one-based
  int t_min = 20;
  int t_max = 30;
  int trials = 100;
  std::uint64_t seed = 1;
  sdp::Settings solver = default_bench_solver();

  int m() const { return leaders.empty() ? default_leaders : static_cast<int>(leaders.size()); }
};

/// Random spanning tree (each node joins an earlier one) plus `extra` distinct
/// extra edges, all drawn from a counter-based stream.
inline std::vector<Edge> random_connected_graph(int nodes, int extra, std::uint64_t seed) {
  if (nodes < 1) throw DomainError("random_connected_graph: need at least one node");
  CounterRng rng(seed, /*stream=*/0x67726170);
  std::set<Edge> have;
  std::vector<Edge> edges;
  for (int i = 1; i < nodes; ++i) {
    const int j = std::min(i - 1, static_cast<int>(rng.next_open01() * i));
    edges.emplace_back(j + 1, i + 1);
    have.insert({j, i});
  }
  const long long possible = static_cast<long long>(nodes) * (nodes - 1) / 2;
  const long long target = std::min<long long>(possible, static_cast<long long>(edges.size()) + extra);
  while (static_cast<long long>(edges.size()) < target) {
    int a = std::min(nodes - 1, static_cast<int>(rng.next_open01() * nodes));
    int b = std::min(nodes - 1, static_cast<int>(rng.next_open01() * nodes));
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    if (!have.insert({a, b}).second) continue;
    edges.emplace_back(a + 1, b + 1);
  }
  return edges;
}

inline std::vector<Edge> resolve_edges(const BenchConfig& c) {
  if (c.generate_graph && c.edges.empty()) {
    return random_connected_graph(c.nodes, c.extra_edges, c.graph_seed);
  }
  return c.edges;
}

inline std::vector<int> resolve_leaders(const BenchConfig& c) {
  if (!c.leaders.empty()) return c.leaders;
  std::vector<int> out;
  for (int i = 1; i <= std::min(c.default_leaders, c.nodes); ++i) out.push_back(i);
  return out;
}

inline Matrix laplacian(int nodes, const std::vector<Edge>& edges) {
  Matrix l = Matrix::Zero(nodes, nodes);
  std::set<Edge> seen;
  for (auto [a, b] : edges) {
    if (a < 1 || b < 1 || a > nodes || b > nodes) {
      throw DomainError("edge (" + std::to_string(a) + ", " + std::to_string(b) + ") out of range");
    }
    if (a == b) throw DomainError("self loop at node " + std::to_string(a));
    if (!seen.insert({std::min(a, b), std::max(a, b)}).second) {
      throw DomainError("duplicate edge (" + std::to_string(a) + ", " + std::to_string(b) + ")");
    }
    --a;
    --b;
    l(a, a) += 1.0;
    l(b, b) += 1.0;
    l(a, b) -= 1.0;
    l(b, a) -= 1.0;
  }
  return l;
}

inline void validate(const BenchConfig& c) {
  if (c.nodes < 1) throw SpecError("bench: nodes must be positive");
  if (c.t_min < 1 || c.t_max < c.t_min) throw SpecError("bench: need 1 <= t_min <= t_max");
  if (c.trials < 1) throw SpecError("bench: trials must be positive");
  const auto leaders = resolve_leaders(c);
  std::set<int> uniq(leaders.begin(), leaders.end());
  if (uniq.size() != leaders.size()) throw SpecError("bench: duplicate leader index");
  for (int i : leaders) {
    if (i < 1 || i > c.nodes) throw SpecError("bench: leader " + std::to_string(i) + " out of range");
  }
  if (leaders.empty()) throw SpecError("bench: at least one leader required");
}

inline LtiSystem build_consensus_system(const BenchConfig& c) {
  validate(c);
  LtiSystem s;
  s.A = Matrix::Identity(c.nodes, c.nodes) - c.coupling * laplacian(c.nodes, resolve_edges(c));
  const auto leaders = resolve_leaders(c);
  s.B = Matrix::Zero(c.nodes, static_cast<Eigen::Index>(leaders.size()));
  for (std::size_t k = 0; k < leaders.size(); ++k) s.B(leaders[k] - 1, static_cast<Eigen::Index>(k)) = 1.0;
  return s;
}

inline SymmetricMatrix weight_q(const BenchConfig& c) {
  return SymmetricMatrix(c.Q ? *c.Q : Matrix(Matrix::Identity(c.nodes, c.nodes)));
}
inline SymmetricMatrix weight_r(const BenchConfig& c) {
  const Eigen::Index m = static_cast<Eigen::Index>(resolve_leaders(c).size());
  return SymmetricMatrix(c.R ? *c.R : Matrix(Matrix::Identity(m, m)));
}
inline Vector initial_state(const BenchConfig& c) {
  if (c.x0) return *c.x0;
  return Vector::LinSpaced(c.nodes, 1.0, static_cast<double>(c.nodes));
}

struct TrialRow {
  int T = 0;
  int trial = 0;
  sdp::Status status = sdp::Status::Inconclusive;
  std::optional<double> gamma;  ///< present iff Feasible
  double seconds = 0.0;
  std::optional<bool> oracle_pass;
  std::optional<double> cost;   ///< true closed-loop cost of the returned K
};

struct AggregateRow {
  int T = 0;
  int trials = 0;
  int feasible = 0;
  int inconclusive = 0;
  double success_fraction = 0.0;
  double avg_min_gamma = std::numeric_limits<double>::quiet_NaN();
  double optimal_gamma_reference = std::numeric_limits<double>::quiet_NaN();
};

struct BenchResult {
  std::vector<TrialRow> rows;  ///< ordered by (trial, T)
  std::vector<AggregateRow> aggregates;
  double optimal_reference = std::numeric_limits<double>::quiet_NaN();
  int oracle_failures = 0;
};

/// The trial's x(0) and all t_max input columns; prefixes give every T.
inline DataRecord trial_data(const BenchConfig& c, const LtiSystem& sys, int trial) {
  // Seed ⊕ trial index selects the stream, so trials are order independent.
  CounterRng rng(c.seed ^ static_cast<std::uint64_t>(trial), /*stream=*/0x7472);
  const Matrix x0 = rng.uniform_matrix(sys.n(), 1, 0.0, 1.0);
  const Matrix u = rng.uniform_matrix(sys.m(), c.t_max, 0.0, 1.0);
  return simulate(sys, x0.col(0), u);
}

inline TrialRow run_one(const BenchConfig& c, const LtiSystem& sys, const DataRecord& full, int trial,
                        int t) {
  TrialRow row;
  row.T = t;
  row.trial = trial;
  const auto q = weight_q(c);
  const auto r = weight_r(c);
  const Vector x0 = initial_state(c);
  const auto start = std::chrono::steady_clock::now();
  SynthesisOutcome out;
  try {
    out = minimize_gamma_lqr(full.prefix(t), q, r, x0, c.solver);
  } catch (const NumericalError&) {
    out.status = sdp::Status::Inconclusive;
  }
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  row.status = out.found() ? sdp::Status::Feasible
                           : (out.status == sdp::Status::Feasible ? sdp::Status::Inconclusive : out.status);
  if (out.found()) {
    row.gamma = out.controller->gamma;
    const LqrSpec spec{q, r, x0, *row.gamma};
    const auto rep = check_suboptimal_lqr(sys, out.controller->K, spec);
    row.oracle_pass = rep.pass;
    if (rep.stable) row.cost = rep.cost;
  }
  return row;
}

inline BenchResult run_benchmark(const BenchConfig& c) {
  const LtiSystem sys = build_consensus_system(c);
  BenchResult res;
  try {
    res.optimal_reference = optimal_lqr_cost(sys, weight_q(c), weight_r(c), initial_state(c));
  } catch (const NumericalError&) {
  }
  for (int trial = 0; trial < c.trials; ++trial) {
    const DataRecord full = trial_data(c, sys, trial);
    for (int t = c.t_min; t <= c.t_max; ++t) res.rows.push_back(run_one(c, sys, full, trial, t));
  }
  for (int t = c.t_min; t <= c.t_max; ++t) {
    AggregateRow a;
    a.T = t;
    a.optimal_gamma_reference = res.optimal_reference;
    double sum = 0.0;
    for (const auto& row : res.rows) {
      if (row.T != t) continue;
      ++a.trials;
      if (row.status == sdp::Status::Feasible) {
        ++a.feasible;
        sum += *row.gamma;
      } else if (row.status == sdp::Status::Inconclusive) {
        ++a.inconclusive;
      }
    }
    a.success_fraction = a.trials ? static_cast<double>(a.feasible) / a.trials : 0.0;
    if (a.feasible) a.avg_min_gamma = sum / a.feasible;
    res.aggregates.push_back(a);
  }
  for (const auto& row : res.rows) {
    if (row.oracle_pass && !*row.oracle_pass) ++res.oracle_failures;
  }
  return res;
}

namespace detail {
inline std::string cell(double v) {
  if (!std::isfinite(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

inline void write_aggregate_csv(std::ostream& out, const BenchResult& r) {
  out << "T,trials,feasible,inconclusive,success_fraction,avg_min_gamma,optimal_gamma_reference\n";
  for (const auto& a : r.aggregates) {
    out << a.T << ',' << a.trials << ',' << a.feasible << ',' << a.inconclusive << ','
        << detail::cell(a.success_fraction) << ',' << detail::cell(a.avg_min_gamma) << ','
        << detail::cell(a.optimal_gamma_reference) << '\n';
  }
}

/// Solve times vary run to run, so they are only written on request.
inline void write_trial_csv(std::ostream& out, const BenchResult& r, bool timing = false) {
  out << "T,trial,status,gamma,cost,oracle_pass" << (timing ? ",seconds" : "") << '\n';
  for (const auto& row : r.rows) {
    out << row.T << ',' << row.trial << ',' << sdp::to_string(row.status) << ','
        << (row.gamma ? detail::cell(*row.gamma) : "") << ',' << (row.cost ? detail::cell(*row.cost) : "")
        << ',' << (row.oracle_pass ? (*row.oracle_pass ? "true" : "false") : "");
    if (timing) out << ',' << detail::cell(row.seconds);
    out << '\n';
  }
}

}  // namespace ddc::consensus
