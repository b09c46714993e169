#pragma once

// File formats: headerless CSV trajectories, system/spec JSON and result JSON.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ddc/consensus.hpp"
#include "ddc/errors.hpp"
#include "ddc/h2.hpp"
#include "ddc/linalg.hpp"
#include "ddc/lqr.hpp"
#include "ddc/oracle.hpp"
#include "ddc/sdp.hpp"
#include "ddc/system_data.hpp"

namespace ddc::io {

using json = nlohmann::json;

/// Text that parses back to the same double (%.17g).
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline Matrix parse_csv(std::istream& in, const std::string& name) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    std::size_t pos = 0;
    while (true) {
      const std::size_t comma = line.find(',', pos);
      std::string cell = line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      const auto b = cell.find_first_not_of(" \t");
      const auto e = cell.find_last_not_of(" \t");
      cell = b == std::string::npos ? std::string() : cell.substr(b, e - b + 1);
      if (!cell.empty() && cell.front() == '+') cell.erase(0, 1);
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
        throw FormatError(name + ": line " + std::to_string(lineno) + ": not a number: '" + cell + "'");
      }
      row.push_back(v);
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw FormatError(name + ": line " + std::to_string(lineno) + " has " +
                        std::to_string(row.size()) + " columns, expected " +
                        std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError(name + ": no data rows");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return m;
}

inline Matrix read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  return parse_csv(in, path);
}

inline void write_csv(std::ostream& out, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

inline void write_csv(const std::string& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  write_csv(out, m);
}

struct SegmentFiles {
  std::string x;
  std::string u;
  std::optional<std::string> w;
};

/// Files hold one sample per row; the record stores one sample per column.
inline DataRecord to_record(const Matrix& x_rows, const Matrix& u_rows,
                            const std::optional<Matrix>& w_rows, const std::string& label = "") {
  const std::string pre = label.empty() ? "" : label + ": ";
  if (x_rows.rows() != u_rows.rows() + 1) {
    throw FormatError(pre + "X has " + std::to_string(x_rows.rows()) + " rows and U has " +
                      std::to_string(u_rows.rows()) + " rows; X needs exactly one more row than U");
  }
  if (w_rows && w_rows->rows() != u_rows.rows()) {
    throw FormatError(pre + "W has " + std::to_string(w_rows->rows()) + " rows and U has " +
                      std::to_string(u_rows.rows()) + " rows; they must match");
  }
  std::optional<Matrix> w;
  if (w_rows) w = w_rows->transpose();
  return DataRecord::from_trajectory(x_rows.transpose(), u_rows.transpose(), w);
}

inline DataRecord ingest(const SegmentFiles& f) {
  std::optional<Matrix> w;
  if (f.w) w = read_csv(*f.w);
  return to_record(read_csv(f.x), read_csv(f.u), w, f.x);
}

/// Several measured segments, concatenated column-wise.
inline DataRecord ingest(const std::vector<SegmentFiles>& files) {
  if (files.empty()) throw FormatError("ingest: no data files");
  std::vector<DataRecord> parts;
  parts.reserve(files.size());
  for (const auto& f : files) parts.push_back(ingest(f));
  return parts.size() == 1 ? parts.front() : DataRecord::concatenate(parts);
}

inline void export_data(const DataRecord& data, const SegmentFiles& f) {
  write_csv(f.x, data.states().transpose());
  write_csv(f.u, data.u_minus().transpose());
  if (f.w) {
    if (!data.has_w()) throw FormatError("export_data: record has no disturbance data");
    write_csv(*f.w, data.w_minus()->transpose());
  }
}

// ---- JSON -----------------------------------------------------------------

inline json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json vector_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

/// A number, or NaN/∞ as null.
inline json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline Matrix matrix_from_json(const json& j, const std::string& name) {
  if (!j.is_array()) throw FormatError(name + ": expected a nested numeric array");
  if (j.empty()) return Matrix(0, 0);
  const std::size_t cols = j.front().is_array() ? j.front().size() : 0;
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].size() != cols) {
      throw FormatError(name + ": row " + std::to_string(i) + " is not an array of " +
                        std::to_string(cols) + " numbers");
    }
    for (std::size_t k = 0; k < cols; ++k) {
      if (!j[i][k].is_number()) throw FormatError(name + ": non-numeric entry");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = j[i][k].get<double>();
    }
  }
  return m;
}

/// Flat array, or a column/row nested array.
inline Vector vector_from_json(const json& j, const std::string& name) {
  if (j.is_array() && (j.empty() || j.front().is_number())) {
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
      if (!j[i].is_number()) throw FormatError(name + ": non-numeric entry");
      v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
  }
  const Matrix m = matrix_from_json(j, name);
  if (m.cols() == 1) return m.col(0);
  if (m.rows() == 1) return m.row(0).transpose();
  throw FormatError(name + ": expected a vector");
}

inline json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
}

inline void write_json(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  out << j.dump(2) << '\n';
}

inline LtiSystem system_from_json(const json& j) {
  if (!j.is_object() || !j.contains("A") || !j.contains("B")) {
    throw FormatError("system JSON needs keys \"A\" and \"B\"");
  }
  LtiSystem s;
  s.A = matrix_from_json(j.at("A"), "A");
  s.B = matrix_from_json(j.at("B"), "B");
  if (j.contains("E")) s.E = matrix_from_json(j.at("E"), "E");
  if (j.contains("C")) s.C = matrix_from_json(j.at("C"), "C");
  if (j.contains("D")) s.D = matrix_from_json(j.at("D"), "D");
  s.validate();
  return s;
}

inline json system_to_json(const LtiSystem& s) {
  json j{{"A", to_json(s.A)}, {"B", to_json(s.B)}};
  if (s.E) j["E"] = to_json(*s.E);
  if (s.C) j["C"] = to_json(*s.C);
  if (s.D) j["D"] = to_json(*s.D);
  return j;
}

/// A nested array, or a number c meaning c·I of the given size.
inline Matrix weight_from_json(const json& j, Eigen::Index dim, const std::string& name) {
  if (j.is_number()) return j.get<double>() * Matrix::Identity(dim, dim);
  return matrix_from_json(j, name);
}

inline bool is_h2_spec(const json& j) { return j.is_object() && (j.contains("C") || j.contains("D")); }

/// Missing Q/R default to identity; a missing x0 is an error.
inline LqrSpec lqr_spec_from_json(const json& j, Eigen::Index n, Eigen::Index m) {
  if (!j.is_object()) throw FormatError("spec JSON must be an object");
  LqrSpec s;
  s.Q = SymmetricMatrix(j.contains("Q") ? weight_from_json(j.at("Q"), n, "Q") : Matrix(Matrix::Identity(n, n)));
  s.R = SymmetricMatrix(j.contains("R") ? weight_from_json(j.at("R"), m, "R") : Matrix(Matrix::Identity(m, m)));
  if (!j.contains("x0")) throw FormatError("LQR spec needs \"x0\"");
  s.x0 = vector_from_json(j.at("x0"), "x0");
  if (j.contains("gamma") && !j.at("gamma").is_null()) s.gamma = j.at("gamma").get<double>();
  s.validate(n, m);
  return s;
}

inline H2Spec h2_spec_from_json(const json& j, Eigen::Index n, Eigen::Index m) {
  if (!j.is_object() || !j.contains("C") || !j.contains("D")) {
    throw FormatError("H2 spec needs \"C\" and \"D\"");
  }
  H2Spec s;
  s.C = matrix_from_json(j.at("C"), "C");
  s.D = matrix_from_json(j.at("D"), "D");
  if (!j.contains("gamma")) throw FormatError("H2 spec needs \"gamma\"");
  s.gamma = j.at("gamma").get<double>();
  s.validate(n, m);
  return s;
}

inline json solver_json(const sdp::SolveResult& r) {
  json margins = json::array();
  for (double v : r.margins) margins.push_back(number(v));
  return {{"iterations", r.iterations}, {"margins", margins}, {"message", r.message}};
}

inline double max_eps(const sdp::SolveResult& r) {
  return r.eps.empty() ? 0.0 : *std::max_element(r.eps.begin(), r.eps.end());
}

inline json lqr_result_json(const SynthesisOutcome& out) {
  json j;
  j["status"] = sdp::to_string(out.status);
  j["reason"] = out.reason;
  j["eps"] = max_eps(out.solver);
  j["solver"] = solver_json(out.solver);
  if (out.controller) {
    const auto& c = *out.controller;
    j["K"] = to_json(c.K);
    j["gamma"] = c.gamma ? number(*c.gamma) : json(nullptr);
    j["theta"] = to_json(c.theta);
    j["Y"] = to_json(c.Y);
    j["cost_bound"] = number(c.cost_bound);
  } else {
    j["K"] = nullptr;
    j["gamma"] = nullptr;
    j["theta"] = nullptr;
    j["Y"] = nullptr;
  }
  return j;
}

inline json h2_result_json(const H2Outcome& out) {
  const SynthesisOutcome& used =
      (out.certificate && out.certificate->condition == H2Condition::II) || (!out.controller && out.condition_ii)
          ? *out.condition_ii
          : out.condition_i;
  SynthesisOutcome shown = used;
  shown.status = out.status;
  shown.controller = out.controller;
  shown.reason = out.reason;
  json j = lqr_result_json(shown);
  if (out.certificate) {
    j["condition"] = to_string(out.certificate->condition);
    j["E_identified"] = out.certificate->E_identified ? to_json(*out.certificate->E_identified) : json(nullptr);
    j["trace_bound"] = out.certificate->trace_bound;
  } else {
    j["condition"] = nullptr;
    j["E_identified"] = nullptr;
    j["trace_bound"] = nullptr;
  }
  j["condition_i"] = sdp::to_string(out.condition_i.status);
  j["condition_ii"] = out.condition_ii ? json(sdp::to_string(out.condition_ii->status)) : json(nullptr);
  return j;
}

inline json report_json(const VerificationReport& r) {
  json j{{"stable", r.stable},
         {"spectral_radius", r.spectral_radius},
         {"cost", number(r.cost)},
         {"gamma", r.gamma},
         {"difference", number(r.difference)},
         {"lyapunov_residual", r.lyapunov_residual},
         {"pass", r.pass}};
  j["series_cost"] = r.series_cost ? number(*r.series_cost) : json(nullptr);
  return j;
}

/// Gain from a result JSON ({"K": …}) or a bare nested array.
inline Matrix gain_from_json(const json& j) {
  if (j.is_object()) {
    if (!j.contains("K") || j.at("K").is_null()) throw FormatError("result JSON carries no gain K");
    return matrix_from_json(j.at("K"), "K");
  }
  return matrix_from_json(j, "K");
}

inline void solver_settings_from_json(const json& j, sdp::Settings& s) {
  if (!j.is_object()) throw FormatError("solver settings must be an object");
  if (j.contains("eps") && !j.at("eps").is_null()) s.eps = j.at("eps").get<double>();
  if (j.contains("tol")) s.tol = j.at("tol").get<double>();
  if (j.contains("max_iterations")) s.max_iterations = j.at("max_iterations").get<int>();
  if (j.contains("barrier_growth")) s.barrier_growth = j.at("barrier_growth").get<double>();
  if (j.contains("ball_radius")) s.ball_radius = j.at("ball_radius").get<double>();
}

/// Unknown keys are rejected so a typo cannot silently fall back to a default.
inline consensus::BenchConfig bench_config_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("bench config JSON must be an object");
  static const std::vector<std::string> known{"nodes",   "edges",    "extra_edges", "graph_seed", "coupling",
                                              "leaders", "Q",        "R",           "x0",         "t_min",
                                              "t_max",   "trials",   "seed",        "solver"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw FormatError("bench config: unknown key \"" + key + "\"");
    }
  }
  consensus::BenchConfig c;
  try {
    if (j.contains("nodes")) c.nodes = j.at("nodes").get<int>();
    if (j.contains("edges")) {
      c.generate_graph = false;
      for (const auto& e : j.at("edges")) {
        if (!e.is_array() || e.size() != 2) throw FormatError("bench config: each edge is a pair [a, b]");
        c.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
      }
    }
    if (j.contains("extra_edges")) c.extra_edges = j.at("extra_edges").get<int>();
    if (j.contains("graph_seed")) c.graph_seed = j.at("graph_seed").get<std::uint64_t>();
    if (j.contains("coupling")) c.coupling = j.at("coupling").get<double>();
    if (j.contains("leaders")) c.leaders = j.at("leaders").get<std::vector<int>>();
    const Eigen::Index n = c.nodes;
    const Eigen::Index m = c.m();
    if (j.contains("Q")) c.Q = weight_from_json(j.at("Q"), n, "Q");
    if (j.contains("R")) c.R = weight_from_json(j.at("R"), m, "R");
    if (j.contains("x0")) c.x0 = vector_from_json(j.at("x0"), "x0");
    if (j.contains("t_min")) c.t_min = j.at("t_min").get<int>();
    if (j.contains("t_max")) c.t_max = j.at("t_max").get<int>();
    if (j.contains("trials")) c.trials = j.at("trials").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("solver")) solver_settings_from_json(j.at("solver"), c.solver);
  } catch (const json::exception& e) {
    throw FormatError(std::string("bench config: ") + e.what());
  }
  if ((c.Q && (c.Q->rows() != c.nodes || c.Q->cols() != c.nodes)) ||
      (c.R && (c.R->rows() != c.m() || c.R->cols() != c.m())) || (c.x0 && c.x0->size() != c.nodes)) {
    throw DimensionError("bench config: Q, R or x0 does not match nodes and leaders");
  }
  return c;
}

}  // namespace ddc::io
