// ddc: command-line front end for data-driven LQR/H2 synthesis.
//
// Exit codes: 0 success, 1 infeasible or no result, 2 usage or input error,
// 3 numerical trouble or inconclusive solve.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ddc/consensus.hpp"
#include "ddc/errors.hpp"
#include "ddc/h2.hpp"
#include "ddc/io.hpp"
#include "ddc/lqr.hpp"
#include "ddc/oracle.hpp"
#include "ddc/random.hpp"
#include "ddc/system_data.hpp"

namespace {

using namespace ddc;
using io::json;

constexpr int kOk = 0;
constexpr int kNoResult = 1;
constexpr int kUsage = 2;
constexpr int kNumerical = 3;

struct DataFlags {
  std::vector<std::string> x, u, w;
};

struct SolverFlags {
  std::optional<double> eps, tol;
  std::optional<int> max_iter;

  void apply(sdp::Settings& s) const {
    if (eps) s.eps = *eps;
    if (tol) s.tol = *tol;
    if (max_iter) s.max_iterations = *max_iter;
  }
};

void add_data_flags(CLI::App* cmd, DataFlags& d, bool need_w) {
  cmd->add_option("--x", d.x, "state CSV, (T+1) rows; repeat for several segments")->required();
  cmd->add_option("--u", d.u, "input CSV, T rows; one per --x")->required();
  auto* w = cmd->add_option("--w", d.w, "disturbance CSV, T rows; one per --x");
  if (need_w) w->required();
}

void add_solver_flags(CLI::App* cmd, SolverFlags& s) {
  cmd->add_option("--eps", s.eps, "strictness margin for every LMI");
  cmd->add_option("--tol", s.tol, "relative duality-gap target");
  cmd->add_option("--max-iter", s.max_iter, "Newton step budget");
}

DataRecord load_data(const DataFlags& d) {
  if (d.x.size() != d.u.size() || (!d.w.empty() && d.w.size() != d.x.size())) {
    throw SpecError("--x, --u and --w must be given the same number of times");
  }
  std::vector<io::SegmentFiles> files;
  for (std::size_t i = 0; i < d.x.size(); ++i) {
    io::SegmentFiles f{d.x[i], d.u[i], std::nullopt};
    if (!d.w.empty()) f.w = d.w[i];
    files.push_back(f);
  }
  return io::ingest(files);
}

void emit(const std::string& out, const json& j) {
  if (out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    io::write_json(out, j);
  }
}

int status_code(sdp::Status s) {
  switch (s) {
    case sdp::Status::Feasible: return kOk;
    case sdp::Status::Infeasible: return kNoResult;
    default: return kNumerical;
  }
}

int run_simulate(const std::string& system, const std::vector<std::string>& u_in, const std::string& w_in,
                 int samples, const std::string& spec, std::uint64_t seed, const std::string& out,
                 const std::string& u_out, const std::string& w_out) {
  const LtiSystem sys = io::system_from_json(io::read_json(system));
  CounterRng rng(seed);
  Matrix u;
  if (!u_in.empty()) {
    if (u_in.size() != 1) throw SpecError("simulate takes a single --u");
    u = io::read_csv(u_in.front()).transpose();
  } else if (samples > 0) {
    u = rng.uniform_matrix(sys.m(), samples, 0.0, 1.0);
  } else {
    throw SpecError("simulate needs --u or --samples");
  }
  std::optional<Matrix> w;
  if (!w_in.empty()) {
    w = io::read_csv(w_in).transpose();
  } else if (sys.E && !u_in.empty()) {
    throw SpecError("system has E; pass --w with the disturbance sequence");
  } else if (sys.E) {
    w = rng.uniform_matrix(sys.d(), u.cols(), 0.0, 1.0);
  }
  Vector x0;
  const json sj = spec.empty() ? json::object() : io::read_json(spec);
  if (sj.contains("x0")) {
    x0 = io::vector_from_json(sj.at("x0"), "x0");
  } else {
    x0 = rng.uniform_matrix(sys.n(), 1, 0.0, 1.0).col(0);
  }
  const DataRecord data = simulate(sys, x0, u, w);
  if (out.empty()) {
    io::write_csv(std::cout, data.states().transpose());
  } else {
    io::write_csv(out, data.states().transpose());
  }
  if (!u_out.empty()) io::write_csv(u_out, data.u_minus().transpose());
  if (!w_out.empty()) {
    if (!data.has_w()) throw SpecError("--w-out given but the system has no disturbance channel");
    io::write_csv(w_out, data.w_minus()->transpose());
  }
  return kOk;
}

int run_check(const DataFlags& d, const SolverFlags& sf, const std::string& out) {
  const DataRecord data = load_data(d);
  const auto rep = identifiability_report(data);
  json j;
  j["identifiability"] = {{"n", rep.n},
                          {"m", rep.m},
                          {"d", rep.d},
                          {"T", rep.T},
                          {"rank_x_minus", rep.rank_x_minus},
                          {"rank_stacked", rep.rank_stacked},
                          {"right_inverse_exists", rep.right_inverse_exists},
                          {"unique", rep.unique}};
  if (!rep.right_inverse_exists) {
    j["status"] = "infeasible";
    j["reason"] = "rank deficiency: rank(X_-) = " + std::to_string(rep.rank_x_minus) + " < n = " +
                  std::to_string(rep.n) + "; no stabilizing controller can be certified from these data";
    emit(out, j);
    return kNoResult;
  }
  sdp::Settings s;
  sf.apply(s);
  const auto stab = data.has_w() ? stabilization_with_disturbance(data, s) : stabilization_informativity(data, s);
  j["stabilization"] = io::lqr_result_json(stab);
  j["status"] = sdp::to_string(stab.status);
  j["reason"] = stab.reason;
  emit(out, j);
  return status_code(stab.status);
}

int run_synth_lqr(const DataFlags& d, const SolverFlags& sf, const std::string& spec_path,
                  std::optional<double> gamma, const std::string& out) {
  const DataRecord data = load_data(d);
  LqrSpec spec = io::lqr_spec_from_json(io::read_json(spec_path), data.n(), data.m());
  if (gamma) spec.gamma = *gamma;
  sdp::Settings s;
  sf.apply(s);
  const auto res = spec.gamma ? synthesize_lqr(data, spec, s) : minimize_gamma_lqr(data, spec.Q, spec.R, spec.x0, s);
  emit(out, io::lqr_result_json(res));
  if (res.status == sdp::Status::Feasible && !res.found()) return kNumerical;
  return status_code(res.status);
}

int run_synth_h2(const DataFlags& d, const SolverFlags& sf, const std::string& spec_path,
                 std::optional<double> gamma, const std::string& out) {
  const DataRecord data = load_data(d);
  json sj = io::read_json(spec_path);
  if (gamma) sj["gamma"] = *gamma;
  const H2Spec spec = io::h2_spec_from_json(sj, data.n(), data.m());
  sdp::Settings s;
  sf.apply(s);
  const auto res = synthesize_h2(data, spec, s);
  emit(out, io::h2_result_json(res));
  if (res.status == sdp::Status::Feasible && !res.controller) return kNumerical;
  return status_code(res.status);
}

int run_verify(const std::string& system, const std::string& gain, const std::string& spec_path,
               std::optional<double> gamma, const std::string& out) {
  const LtiSystem sys = io::system_from_json(io::read_json(system));
  const Matrix k = io::gain_from_json(io::read_json(gain));
  json sj = io::read_json(spec_path);
  if (gamma) sj["gamma"] = *gamma;
  VerificationReport rep;
  if (io::is_h2_spec(sj)) {
    rep = check_suboptimal_h2(sys, k, io::h2_spec_from_json(sj, sys.n(), sys.m()));
  } else {
    const LqrSpec spec = io::lqr_spec_from_json(sj, sys.n(), sys.m());
    if (!spec.gamma) throw SpecError("verify needs gamma in the spec or --gamma");
    rep = check_suboptimal_lqr(sys, k, spec);
  }
  emit(out, io::report_json(rep));
  return rep.pass ? kOk : kNoResult;
}

int run_bench(const std::string& config, std::optional<int> trials, std::optional<std::uint64_t> seed,
              const SolverFlags& sf, const std::string& out, const std::string& rows, bool timing) {
  consensus::BenchConfig c = config.empty() ? consensus::BenchConfig{} : io::bench_config_from_json(io::read_json(config));
  if (trials) c.trials = *trials;
  if (seed) c.seed = *seed;
  sf.apply(c.solver);
  const auto res = consensus::run_benchmark(c);
  if (out.empty()) {
    consensus::write_aggregate_csv(std::cout, res);
  } else {
    std::ofstream f(out, std::ios::binary);
    if (!f) throw FormatError("cannot write " + out);
    consensus::write_aggregate_csv(f, res);
  }
  if (!rows.empty()) {
    std::ofstream f(rows, std::ios::binary);
    if (!f) throw FormatError("cannot write " + rows);
    consensus::write_trial_csv(f, res, timing);
  }
  if (res.oracle_failures > 0) {
    std::cerr << "error: " << res.oracle_failures << " feasible rows failed the model-based check\n";
    return kNumerical;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data-driven LQR and H2 controller synthesis from measured trajectories"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  std::string out;
  DataFlags data;
  SolverFlags solver;
  std::string spec, system, gain, config, rows, u_out, w_out, w_single;
  std::optional<double> gamma;
  std::optional<int> trials;
  std::optional<std::uint64_t> seed;
  int samples = 0;
  bool timing = false;

  auto* sim = app.add_subcommand("simulate", "simulate a system JSON and write X.csv");
  sim->add_option("--system", system, "system JSON with A, B and optional E")->required();
  std::vector<std::string> sim_u;
  sim->add_option("--u", sim_u, "input CSV, one row per step");
  sim->add_option("--w", w_single, "disturbance CSV, one row per step");
  sim->add_option("--samples", samples, "draw this many inputs uniformly from (0,1)");
  sim->add_option("--spec", spec, "JSON with x0; otherwise x0 is drawn from (0,1)");
  sim->add_option("--seed", seed, "generator seed");
  sim->add_option("-o,--out", out, "X.csv output (default stdout)");
  sim->add_option("--u-out", u_out, "write the inputs used");
  sim->add_option("--w-out", w_out, "write the disturbances used");

  auto* check = app.add_subcommand("check", "rank report and stabilization informativity");
  add_data_flags(check, data, false);
  add_solver_flags(check, solver);
  check->add_option("-o,--out", out, "result JSON (default stdout)");

  auto* lqr = app.add_subcommand("synth-lqr", "LQR synthesis; minimizes gamma when none is given");
  add_data_flags(lqr, data, false);
  add_solver_flags(lqr, solver);
  lqr->add_option("--spec", spec, "JSON with Q, R, x0 and optional gamma")->required();
  lqr->add_option("--gamma", gamma, "overrides the spec's gamma");
  lqr->add_option("-o,--out", out, "result JSON (default stdout)");

  auto* h2 = app.add_subcommand("synth-h2", "H2 synthesis with measured disturbances");
  add_data_flags(h2, data, true);
  add_solver_flags(h2, solver);
  h2->add_option("--spec", spec, "JSON with C, D and gamma")->required();
  h2->add_option("--gamma", gamma, "overrides the spec's gamma");
  h2->add_option("-o,--out", out, "result JSON (default stdout)");

  auto* verify = app.add_subcommand("verify", "model-based check of a gain against a known system");
  verify->add_option("--system", system, "system JSON")->required();
  verify->add_option("--gain", gain, "result JSON with K, or a bare nested array")->required();
  verify->add_option("--spec", spec, "LQR or H2 spec JSON")->required();
  verify->add_option("--gamma", gamma, "overrides the spec's gamma");
  verify->add_option("-o,--out", out, "report JSON (default stdout)");

  auto* bench = app.add_subcommand("bench-consensus", "sample-size sweep on leader-steered consensus");
  bench->add_option("--config", config, "bench config JSON (defaults otherwise)");
  bench->add_option("--trials", trials, "number of trials");
  bench->add_option("--seed", seed, "trial seed");
  add_solver_flags(bench, solver);
  bench->add_option("-o,--out", out, "aggregate CSV (default stdout)");
  bench->add_option("--rows", rows, "per-trial CSV");
  bench->add_flag("--timing", timing, "add solve seconds to the per-trial CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (sim->parsed()) {
      return run_simulate(system, sim_u, w_single, samples, spec, seed.value_or(1), out, u_out, w_out);
    }
    if (check->parsed()) return run_check(data, solver, out);
    if (lqr->parsed()) return run_synth_lqr(data, solver, spec, gamma, out);
    if (h2->parsed()) return run_synth_h2(data, solver, spec, gamma, out);
    if (verify->parsed()) return run_verify(system, gain, spec, gamma, out);
    if (bench->parsed()) return run_bench(config, trials, seed, solver, out, rows, timing);
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const SpecError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  }
  return kUsage;
}
