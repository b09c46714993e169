#pragma once

// Dense solver for strict linear matrix inequalities over matrix-valued
// decision variables.
//
// Every inequality has the form
//
//   C₀ + Σ_t (L_t X_t R_tᵀ + R_t X_tᵀ L_tᵀ) ⪰ ε·I,
//
// where X_t is one of the decision blocks. Scalar equalities are eliminated
// through a null-space parameterization before the barrier iterations start.
// The barrier Hessian of −log det is assembled directly from the term
// factors (L_t, R_t), which keeps the cost per Newton step far below the
// generic Σ_ij tr(S⁻¹F_i S⁻¹F_j) formula.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ddc/errors.hpp"
#include "ddc/linalg.hpp"

namespace ddc::sdp {

using Eigen::Index;

struct VarId {
  int index = -1;
  bool valid() const { return index >= 0; }
  friend bool operator==(VarId a, VarId b) { return a.index == b.index; }
};

enum class BlockKind { Symmetric, General };

struct VariableBlock {
  std::string name;
  BlockKind kind = BlockKind::General;
  Index rows = 0;
  Index cols = 0;
  Index packed_offset = 0;  ///< position in the decision vector
  Index full_offset = 0;    ///< position in the vector of all matrix entries

  Index packed_size() const {
    return kind == BlockKind::Symmetric ? rows * (rows + 1) / 2 : rows * cols;
  }
  Index full_size() const { return rows * cols; }
};

/// Named decision blocks and their placement in the decision vector.
/// Symmetric blocks store their upper triangle (column-major); general
/// blocks store all entries column-major.
class DecisionLayout {
 public:
  VarId add_symmetric(const std::string& name, Index dim) {
    return add(name, BlockKind::Symmetric, dim, dim);
  }
  VarId add_general(const std::string& name, Index rows, Index cols) {
    return add(name, BlockKind::General, rows, cols);
  }
  VarId add_scalar(const std::string& name) { return add_general(name, 1, 1); }

  Index dimension() const { return packed_dim_; }
  Index full_dimension() const { return full_dim_; }
  const std::vector<VariableBlock>& blocks() const { return blocks_; }
  const VariableBlock& block(VarId v) const {
    if (v.index < 0 || v.index >= static_cast<int>(blocks_.size())) {
      throw DimensionError("DecisionLayout: invalid variable id");
    }
    return blocks_[static_cast<std::size_t>(v.index)];
  }
  std::optional<VarId> find(const std::string& name) const {
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      if (blocks_[i].name == name) return VarId{static_cast<int>(i)};
    }
    return std::nullopt;
  }

  /// Packed index of full entry (i, j) of block `b`.
  static Index packed_index(const VariableBlock& b, Index i, Index j) {
    if (b.kind == BlockKind::Symmetric) {
      if (i > j) std::swap(i, j);
      return b.packed_offset + j * (j + 1) / 2 + i;
    }
    return b.packed_offset + i + j * b.rows;
  }

  /// Map from every full matrix entry to its packed coordinate.
  std::vector<Index> full_to_packed() const {
    std::vector<Index> map(static_cast<std::size_t>(full_dim_));
    for (const auto& b : blocks_) {
      for (Index j = 0; j < b.cols; ++j) {
        for (Index i = 0; i < b.rows; ++i) {
          map[static_cast<std::size_t>(b.full_offset + i + j * b.rows)] = packed_index(b, i, j);
        }
      }
    }
    return map;
  }

  Matrix unpack(const Vector& x, VarId v) const {
    const auto& b = block(v);
    Matrix m(b.rows, b.cols);
    for (Index j = 0; j < b.cols; ++j) {
      for (Index i = 0; i < b.rows; ++i) m(i, j) = x(packed_index(b, i, j));
    }
    return m;
  }

  void pack(const Matrix& value, VarId v, Vector& x) const {
    const auto& b = block(v);
    if (value.rows() != b.rows || value.cols() != b.cols) {
      throw DimensionError("DecisionLayout::pack: block '" + b.name + "' has wrong shape");
    }
    for (Index j = 0; j < b.cols; ++j) {
      for (Index i = 0; i < b.rows; ++i) {
        if (b.kind == BlockKind::Symmetric && i > j) continue;
        x(packed_index(b, i, j)) =
            b.kind == BlockKind::Symmetric ? 0.5 * (value(i, j) + value(j, i)) : value(i, j);
      }
    }
  }

 private:
  VarId add(const std::string& name, BlockKind kind, Index rows, Index cols) {
    if (find(name)) throw DimensionError("DecisionLayout: duplicate block name '" + name + "'");
    if (rows < 0 || cols < 0) throw DimensionError("DecisionLayout: negative block size");
    VariableBlock b{name, kind, rows, cols, packed_dim_, full_dim_};
    packed_dim_ += b.packed_size();
    full_dim_ += b.full_size();
    blocks_.push_back(b);
    return VarId{static_cast<int>(blocks_.size()) - 1};
  }

  std::vector<VariableBlock> blocks_;
  Index packed_dim_ = 0;
  Index full_dim_ = 0;
};

using Assignment = std::map<std::string, Matrix>;

/// Contributes L·X·Rᵀ + R·Xᵀ·Lᵀ to an inequality.
struct Term {
  VarId var;
  Matrix left;
  Matrix right;
};

/// C₀ + Σ terms ⪰ ε·I. When `margin` is empty the solver's policy applies.
struct AffineMatrixInequality {
  std::string name;
  Matrix constant;
  std::vector<Term> terms;
  std::optional<double> margin;

  Index size() const { return constant.rows(); }
};

/// Helper for block-structured inequalities with partition sizes `sizes`.
class BlockLmiBuilder {
 public:
  BlockLmiBuilder(std::string name, std::vector<Index> sizes) : sizes_(std::move(sizes)) {
    offsets_.push_back(0);
    for (Index s : sizes_) offsets_.push_back(offsets_.back() + s);
    lmi_.name = std::move(name);
    lmi_.constant = Matrix::Zero(offsets_.back(), offsets_.back());
  }

  /// Block (bi, bj) += P·X·Qᵀ, mirrored into (bj, bi). For bi == bj the
  /// diagonal block receives P·X·Qᵀ + Q·Xᵀ·Pᵀ.
  BlockLmiBuilder& add(VarId var, std::size_t bi, std::size_t bj, const Matrix& p,
                       const Matrix& q) {
    Term t{var, embed(bi, p), embed(bj, q)};
    lmi_.terms.push_back(std::move(t));
    return *this;
  }

  /// Diagonal block bi += P·Y·Pᵀ for a symmetric (or scalar) variable Y.
  BlockLmiBuilder& add_congruence(VarId var, std::size_t bi, const Matrix& p) {
    return add(var, bi, bi, 0.5 * p, p);
  }

  BlockLmiBuilder& set_constant(std::size_t bi, std::size_t bj, const Matrix& c) {
    lmi_.constant.block(offsets_[bi], offsets_[bj], sizes_[bi], sizes_[bj]) = c;
    if (bi != bj) {
      lmi_.constant.block(offsets_[bj], offsets_[bi], sizes_[bj], sizes_[bi]) = c.transpose();
    }
    return *this;
  }

  BlockLmiBuilder& margin(double eps) {
    lmi_.margin = eps;
    return *this;
  }

  AffineMatrixInequality build() const {
    AffineMatrixInequality out = lmi_;
    out.constant = 0.5 * (out.constant + out.constant.transpose());
    return out;
  }

 private:
  Matrix embed(std::size_t bi, const Matrix& p) const {
    if (p.rows() != sizes_.at(bi)) {
      throw DimensionError("BlockLmiBuilder(" + lmi_.name + "): coefficient has " +
                           std::to_string(p.rows()) + " rows, block " + std::to_string(bi) +
                           " has " + std::to_string(sizes_[bi]));
    }
    Matrix e = Matrix::Zero(offsets_.back(), p.cols());
    e.middleRows(offsets_[bi], sizes_[bi]) = p;
    return e;
  }

  std::vector<Index> sizes_;
  std::vector<Index> offsets_;
  AffineMatrixInequality lmi_;
};

/// Contributes left·X·right to an equality.
struct EqualityTerm {
  VarId var;
  Matrix left;
  Matrix right;
};

/// Σ left·X·right = rhs, entrywise.
struct LinearEquality {
  std::string name;
  std::vector<EqualityTerm> terms;
  Matrix rhs;
};

/// Minimize Σ ⟨coefficient, X⟩_F.
struct Objective {
  std::vector<std::pair<VarId, Matrix>> terms;
};

struct SdpProblem {
  DecisionLayout layout;
  std::vector<AffineMatrixInequality> inequalities;
  std::vector<LinearEquality> equalities;
  std::optional<Objective> objective;

  void validate() const {
    for (const auto& lmi : inequalities) {
      if (lmi.constant.rows() != lmi.constant.cols()) {
        throw DimensionError("inequality '" + lmi.name + "': constant must be square");
      }
      for (const auto& t : lmi.terms) {
        const auto& b = layout.block(t.var);
        if (t.left.rows() != lmi.size() || t.right.rows() != lmi.size() ||
            t.left.cols() != b.rows || t.right.cols() != b.cols) {
          throw DimensionError("inequality '" + lmi.name + "': term on '" + b.name +
                               "' has inconsistent shape");
        }
      }
    }
    for (const auto& eq : equalities) {
      for (const auto& t : eq.terms) {
        const auto& b = layout.block(t.var);
        if (t.left.cols() != b.rows || t.right.rows() != b.cols ||
            t.left.rows() != eq.rhs.rows() || t.right.cols() != eq.rhs.cols()) {
          throw DimensionError("equality '" + eq.name + "': term on '" + b.name +
                               "' has inconsistent shape");
        }
      }
    }
    if (objective) {
      for (const auto& [v, c] : objective->terms) {
        const auto& b = layout.block(v);
        if (c.rows() != b.rows || c.cols() != b.cols) {
          throw DimensionError("objective: coefficient for '" + b.name + "' has wrong shape");
        }
      }
    }
  }
};

struct Settings {
  /// Absolute strictness margin for every inequality; empty selects
  /// 1e-8·(1 + ‖C₀‖₂) per inequality.
  std::optional<double> eps;
  double tol = 1e-9;         ///< relative duality-gap target
  int max_iterations = 500;  ///< Newton steps over both phases
  double ball_radius = 1e8;  ///< ‖x‖ ≤ R keeps the barrier problems bounded
  double margin_cap = 1.0;   ///< phase-1 margins above ε are capped here
  double barrier_growth = 20.0;
  double center_tol = 1e-9;  ///< Newton decrement²/2 that ends a centering
};

enum class Status { Feasible, Infeasible, Inconclusive };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::Feasible: return "feasible";
    case Status::Infeasible: return "infeasible";
    case Status::Inconclusive: return "inconclusive";
  }
  return "?";
}

struct SolveResult {
  Status status = Status::Inconclusive;
  Assignment assignment;  ///< present when Feasible
  Vector x;               ///< packed decision vector of the last iterate
  double objective = 0.0;
  int iterations = 0;
  double worst_margin = -std::numeric_limits<double>::infinity();  ///< min_k λ_min − ε_k
  std::vector<double> margins;  ///< λ_min per inequality
  std::vector<double> eps;      ///< ε per inequality
  double equality_residual = 0.0;
  double margin_bound = std::numeric_limits<double>::quiet_NaN();  ///< phase-1 upper bound
  double gap = std::numeric_limits<double>::quiet_NaN();
  bool ball_active = false;
  std::string message;
};

inline double default_margin(const Matrix& constant) {
  double norm2 = 0.0;
  if (constant.size() > 0) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(constant, Eigen::EigenvaluesOnly);
    norm2 = es.eigenvalues().cwiseAbs().maxCoeff();
  }
  return 1e-8 * (1.0 + norm2);
}

inline double resolve_margin(const AffineMatrixInequality& lmi, const Settings& s) {
  if (lmi.margin) return *lmi.margin;
  if (s.eps) return *s.eps;
  return default_margin(lmi.constant);
}

inline Matrix evaluate(const AffineMatrixInequality& lmi, const DecisionLayout& layout,
                       const Vector& x) {
  Matrix s = lmi.constant;
  for (const auto& t : lmi.terms) {
    const Matrix lxr = t.left * layout.unpack(x, t.var) * t.right.transpose();
    s += lxr + lxr.transpose();
  }
  return 0.5 * (s + s.transpose());
}

inline Matrix evaluate(const LinearEquality& eq, const DecisionLayout& layout, const Vector& x) {
  Matrix v = -eq.rhs;
  for (const auto& t : eq.terms) v += t.left * layout.unpack(x, t.var) * t.right;
  return v;
}

inline Vector pack_assignment(const DecisionLayout& layout, const Assignment& a) {
  Vector x = Vector::Zero(layout.dimension());
  for (std::size_t i = 0; i < layout.blocks().size(); ++i) {
    const auto& b = layout.blocks()[i];
    auto it = a.find(b.name);
    if (it == a.end()) throw DimensionError("assignment: missing block '" + b.name + "'");
    layout.pack(it->second, VarId{static_cast<int>(i)}, x);
  }
  return x;
}

inline Assignment unpack_assignment(const DecisionLayout& layout, const Vector& x) {
  Assignment a;
  for (std::size_t i = 0; i < layout.blocks().size(); ++i) {
    a[layout.blocks()[i].name] = layout.unpack(x, VarId{static_cast<int>(i)});
  }
  return a;
}

struct PointDiagnostics {
  std::vector<double> margins;  ///< λ_min per inequality
  std::vector<double> eps;
  std::vector<double> equality_residuals;  ///< Frobenius norm per equality
  bool feasible = false;
};

/// Feasibility thresholds shared by check_point and the solver.
inline constexpr double kMarginSlack = 1e-9;
inline constexpr double kEqualityTolerance = 1e-8;

inline PointDiagnostics check_point(const SdpProblem& problem, const Assignment& assignment,
                                    const Settings& settings = {}) {
  problem.validate();
  const Vector x = pack_assignment(problem.layout, assignment);
  PointDiagnostics d;
  d.feasible = true;
  for (const auto& lmi : problem.inequalities) {
    const double margin = psd_margin(SymmetricMatrix(evaluate(lmi, problem.layout, x)));
    const double eps = resolve_margin(lmi, settings);
    d.margins.push_back(margin);
    d.eps.push_back(eps);
    if (!(margin >= eps - kMarginSlack)) d.feasible = false;
  }
  for (const auto& eq : problem.equalities) {
    const double r = evaluate(eq, problem.layout, x).norm();
    d.equality_residuals.push_back(r);
    if (!(r <= kEqualityTolerance)) d.feasible = false;
  }
  return d;
}

namespace detail {

struct CompiledTerm {
  Index full_offset;
  Index rows, cols;
  VarId var;
  Matrix left, right;
};

struct CompiledLmi {
  Index size;
  Matrix constant;
  std::vector<CompiledTerm> terms;
  double eps;
};

/// Barrier state of one inequality at a point.
struct LmiEval {
  Eigen::LLT<Matrix> chol;
  double logdet = 0.0;
};

class BarrierSolver {
 public:
  BarrierSolver(const SdpProblem& problem, const Settings& settings)
      : problem_(problem), settings_(settings), layout_(problem.layout) {
    compile();
  }

  SolveResult run();

  // The members below are exposed for derivative checks in tests.
  void compile() {
    const Index n = layout_.dimension();
    for (const auto& lmi : problem_.inequalities) {
      CompiledLmi c;
      c.size = lmi.size();
      c.constant = 0.5 * (lmi.constant + lmi.constant.transpose());
      c.eps = resolve_margin(lmi, settings_);
      for (const auto& t : lmi.terms) {
        const auto& b = layout_.block(t.var);
        // Terms on the same block with identical right factors are merged.
        bool merged = false;
        for (auto& ex : c.terms) {
          if (ex.var == t.var && ex.right.rows() == t.right.rows() &&
              ex.right.cols() == t.right.cols() && ex.right == t.right) {
            ex.left += t.left;
            merged = true;
            break;
          }
        }
        if (!merged) c.terms.push_back({b.full_offset, b.rows, b.cols, t.var, t.left, t.right});
      }
      lmis_.push_back(std::move(c));
    }
    full_to_packed_ = layout_.full_to_packed();
    x0_ = Vector::Zero(n);

    objective_ = Vector::Zero(n);
    if (problem_.objective) {
      for (const auto& [v, coef] : problem_.objective->terms) {
        const auto& b = layout_.block(v);
        for (Index j = 0; j < b.cols; ++j) {
          for (Index i = 0; i < b.rows; ++i) {
            objective_(DecisionLayout::packed_index(b, i, j)) += coef(i, j);
          }
        }
      }
    }

    // Equalities A·x = b over the packed vector.
    Index rows = 0;
    for (const auto& eq : problem_.equalities) rows += eq.rhs.size();
    eq_a_ = Matrix::Zero(rows, n);
    eq_b_ = Vector::Zero(rows);
    Index r0 = 0;
    for (const auto& eq : problem_.equalities) {
      const Index er = eq.rhs.rows();
      const Index ec = eq.rhs.cols();
      for (Index q = 0; q < ec; ++q) {
        for (Index p = 0; p < er; ++p) eq_b_(r0 + p + q * er) = eq.rhs(p, q);
      }
      for (const auto& t : eq.terms) {
        const auto& b = layout_.block(t.var);
        // (left·X·right)(p, q) = Σ_ij left(p, i) X(i, j) right(j, q)
        for (Index j = 0; j < b.cols; ++j) {
          for (Index i = 0; i < b.rows; ++i) {
            const Index col = DecisionLayout::packed_index(b, i, j);
            for (Index q = 0; q < ec; ++q) {
              const double rq = t.right(j, q);
              if (rq == 0.0) continue;
              for (Index p = 0; p < er; ++p) eq_a_(r0 + p + q * er, col) += t.left(p, i) * rq;
            }
          }
        }
      }
      r0 += er * ec;
    }
  }

  Index nz() const { return basis_ ? basis_->cols() : layout_.dimension(); }
  Vector to_x(const Vector& z) const { return basis_ ? Vector(x0_ + *basis_ * z) : Vector(x0_ + z); }

  /// Factorizes every shifted inequality; false when any is not positive definite.
  bool evaluate_all(const Vector& x, double shift, std::vector<LmiEval>& out) const {
    out.resize(lmis_.size());
    for (std::size_t k = 0; k < lmis_.size(); ++k) {
      const auto& c = lmis_[k];
      Matrix s = c.constant;
      for (const auto& t : c.terms) {
        const Matrix lxr = t.left * layout_.unpack(x, t.var) * t.right.transpose();
        s += lxr + lxr.transpose();
      }
      s.diagonal().array() -= c.eps + shift;
      out[k].chol.compute(s);
      if (out[k].chol.info() != Eigen::Success) return false;
      const auto diag = out[k].chol.matrixLLT().diagonal();
      if (!(diag.minCoeff() > 0.0) || !diag.allFinite()) return false;
      out[k].logdet = 2.0 * diag.array().log().sum();
    }
    return true;
  }

  /// Barrier value, or +inf outside the domain. `t` is the phase-1 margin.
  double barrier(const Vector& z, double t, bool phase1, double tau) const {
    const Vector x = to_x(z);
    const double r2 = settings_.ball_radius * settings_.ball_radius;
    const double slack_ball = r2 - x.squaredNorm();
    if (!(slack_ball > 0.0)) return std::numeric_limits<double>::infinity();
    double f = -std::log(slack_ball);
    if (phase1) {
      const double slack_cap = settings_.margin_cap - t;
      if (!(slack_cap > 0.0)) return std::numeric_limits<double>::infinity();
      f -= std::log(slack_cap);
      f -= tau * t;
    } else {
      f += tau * objective_.dot(x);
    }
    std::vector<LmiEval> ev;
    if (!evaluate_all(x, phase1 ? t : 0.0, ev)) return std::numeric_limits<double>::infinity();
    for (const auto& e : ev) f -= e.logdet;
    return f;
  }

  /// Gradient and Hessian of the barrier in packed x coordinates; in phase 1
  /// the margin variable is appended as the last coordinate.
  void derivatives(const Vector& x, double t, bool phase1, double tau,
                   const std::vector<LmiEval>& ev, Vector& grad, Matrix& hess) const;

  struct NewtonStep {
    Vector dz;
    double dt = 0.0;
    double decrement2 = 0.0;
    bool ok = false;
  };

  NewtonStep newton(const Vector& z, double t, bool phase1, double tau) const;

  static bool spd_solve(const Matrix& h, const Vector& rhs, Vector& out) {
    const Index n = h.rows();
    if (n == 0) {
      out = Vector(0);
      return true;
    }
    Vector d(n);
    for (Index i = 0; i < n; ++i) {
      const double hi = h(i, i);
      d(i) = hi > 0.0 ? 1.0 / std::sqrt(hi) : 1.0;
    }
    const Matrix hs = d.asDiagonal() * h * d.asDiagonal();
    const Vector b = d.cwiseProduct(rhs);
    for (double reg = 0.0; reg < 1.0; reg = reg == 0.0 ? 1e-14 : reg * 100.0) {
      Matrix hr = hs;
      hr.diagonal().array() += reg;
      Eigen::LLT<Matrix> llt(hr);
      if (llt.info() != Eigen::Success) continue;
      Vector y = llt.solve(b);
      // Refinement against the unshifted matrix undoes most of the shift.
      for (int k = 0; k < 3 && reg > 0.0; ++k) y += llt.solve(b - hs * y);
      out = d.cwiseProduct(y);
      if (out.allFinite()) return true;
    }
    return false;
  }

  /// Choose τ so that τ·c + ∇φ is smallest in the Hessian norm.
  double initial_tau(const Vector& z, double t, bool phase1) const;

  enum class Centering { Failed, Approximate, Exact };

  /// Damped Newton centering. Approximate means Newton stopped making
  /// progress close to the central path (decrement²/2 ≤ 0.1).
  Centering center(Vector& z, double& t, bool phase1, double tau, SolveResult& res) const;

  void finalize(const Vector& z, SolveResult& res) const;

  const SdpProblem& problem_;
  Settings settings_;
  const DecisionLayout& layout_;
  std::vector<CompiledLmi> lmis_;
  std::vector<Index> full_to_packed_;
  Vector objective_;
  Matrix eq_a_;
  Vector eq_b_;
  Vector x0_;
  std::optional<Matrix> basis_;
};

inline void BarrierSolver::derivatives(const Vector& x, double t, bool phase1, double tau,
                                       const std::vector<LmiEval>& ev, Vector& grad,
                                       Matrix& hess) const {
  const Index full = layout_.full_dimension();
  const Index n = layout_.dimension();
  Vector gf = Vector::Zero(full);
  Matrix hf = Matrix::Zero(full, full);
  Vector cross_full = Vector::Zero(full);  // ∂²/∂t∂x in full coordinates
  double g_t = 0.0;
  double h_tt = 0.0;

  for (std::size_t k = 0; k < lmis_.size(); ++k) {
    const auto& c = lmis_[k];
    const Matrix g = ev[k].chol.solve(Matrix::Identity(c.size, c.size));
    const std::size_t nt = c.terms.size();
    std::vector<Matrix> gl(nt), gr(nt);
    for (std::size_t a = 0; a < nt; ++a) {
      gl[a] = g * c.terms[a].left;
      gr[a] = g * c.terms[a].right;
    }
    Matrix g2;
    if (phase1) {
      g_t += g.trace();
      h_tt += g.squaredNorm();
      g2 = g * g;
    }
    for (std::size_t a = 0; a < nt; ++a) {
      const auto& ta = c.terms[a];
      // ∂(−log det)/∂X_a = −2 Lᵀ G R
      const Matrix lgr = ta.left.transpose() * gr[a];
      for (Index j = 0; j < ta.cols; ++j) {
        gf.segment(ta.full_offset + j * ta.rows, ta.rows) -= 2.0 * lgr.col(j);
      }
      if (phase1) {
        const Matrix lg2r = ta.left.transpose() * g2 * ta.right;
        for (Index j = 0; j < ta.cols; ++j) {
          cross_full.segment(ta.full_offset + j * ta.rows, ta.rows) -= 2.0 * lg2r.col(j);
        }
      }
      for (std::size_t b = 0; b < nt; ++b) {
        const auto& tb = c.terms[b];
        const Matrix ct = gl[a].transpose() * tb.left;    // r_a × r_b
        const Matrix dm = ta.right.transpose() * gr[b];   // c_a × c_b
        const Matrix am = tb.right.transpose() * gl[a];   // c_b × r_a
        const Matrix bm = ta.right.transpose() * gl[b];   // c_a × r_b
        // Block (cc, c1) over (bb, b1) is 2·(D(cc,c1)·Cᵀ + A[c1,:]ᵀ·B[cc,:]).
        for (Index cc = 0; cc < ta.cols; ++cc) {
          for (Index c1 = 0; c1 < tb.cols; ++c1) {
            auto blk = hf.block(ta.full_offset + cc * ta.rows, tb.full_offset + c1 * tb.rows,
                                ta.rows, tb.rows);
            blk.noalias() += (2.0 * dm(cc, c1)) * ct;
            blk.noalias() += (2.0 * am.row(c1).transpose()) * bm.row(cc);
          }
        }
      }
    }
  }

  // Reduce full coordinates to packed ones.
  grad = Vector::Zero(n + (phase1 ? 1 : 0));
  hess = Matrix::Zero(n + (phase1 ? 1 : 0), n + (phase1 ? 1 : 0));
  for (Index i = 0; i < full; ++i) {
    const Index pi = full_to_packed_[static_cast<std::size_t>(i)];
    grad(pi) += gf(i);
    if (phase1) hess(pi, n) += cross_full(i);
    for (Index j = 0; j < full; ++j) {
      const double v = hf(i, j);
      if (v != 0.0) hess(pi, full_to_packed_[static_cast<std::size_t>(j)]) += v;
    }
  }
  if (phase1) {
    hess.row(n).head(n) = hess.col(n).head(n).transpose();
    const double slack_cap = settings_.margin_cap - t;
    grad(n) = g_t - tau + 1.0 / slack_cap;
    hess(n, n) = h_tt + 1.0 / (slack_cap * slack_cap);
  } else {
    grad.head(n) += tau * objective_;
  }
  // Ball barrier −log(R² − ‖x‖²).
  const double slack_ball = settings_.ball_radius * settings_.ball_radius - x.squaredNorm();
  grad.head(n) += (2.0 / slack_ball) * x;
  hess.topLeftCorner(n, n).diagonal().array() += 2.0 / slack_ball;
  hess.topLeftCorner(n, n) += (4.0 / (slack_ball * slack_ball)) * x * x.transpose();
}

inline BarrierSolver::NewtonStep BarrierSolver::newton(const Vector& z, double t, bool phase1,
                                                       double tau) const {
  NewtonStep step;
  const Vector x = to_x(z);
  std::vector<LmiEval> ev;
  if (!evaluate_all(x, phase1 ? t : 0.0, ev)) return step;
  Vector gx;
  Matrix hx;
  derivatives(x, t, phase1, tau, ev, gx, hx);
  const Index n = layout_.dimension();
  const Index extra = phase1 ? 1 : 0;
  Vector g;
  Matrix h;
  if (basis_) {
    const Matrix& nb = *basis_;
    const Index k = nb.cols();
    g.resize(k + extra);
    h.resize(k + extra, k + extra);
    g.head(k) = nb.transpose() * gx.head(n);
    const Matrix hn = hx.topLeftCorner(n, n) * nb;
    h.topLeftCorner(k, k) = nb.transpose() * hn;
    if (phase1) {
      g(k) = gx(n);
      const Vector cross = nb.transpose() * hx.col(n).head(n);
      h.col(k).head(k) = cross;
      h.row(k).head(k) = cross.transpose();
      h(k, k) = hx(n, n);
    }
  } else {
    g = std::move(gx);
    h = std::move(hx);
  }
  Vector d;
  if (!spd_solve(h, -g, d)) return step;
  step.dz = d.head(nz());
  step.dt = phase1 ? d(nz()) : 0.0;
  step.decrement2 = -g.dot(d);
  step.ok = std::isfinite(step.decrement2);
  return step;
}

inline double BarrierSolver::initial_tau(const Vector& z, double t, bool phase1) const {
  // Gradient/Hessian of the pure barrier (τ = 0).
  const Vector x = to_x(z);
  std::vector<LmiEval> ev;
  if (!evaluate_all(x, phase1 ? t : 0.0, ev)) return 1.0;
  Vector gx;
  Matrix hx;
  derivatives(x, t, phase1, 0.0, ev, gx, hx);
  const Index n = layout_.dimension();
  Vector c = Vector::Zero(gx.size());
  if (phase1) {
    c(n) = -1.0;
  } else {
    c.head(n) = objective_;
  }
  Vector g = gx, cc = c;
  Matrix h = hx;
  if (basis_) {
    const Matrix& nb = *basis_;
    const Index k = nb.cols();
    const Index extra = phase1 ? 1 : 0;
    g.resize(k + extra);
    cc.resize(k + extra);
    h.resize(k + extra, k + extra);
    g.head(k) = nb.transpose() * gx.head(n);
    cc.head(k) = nb.transpose() * c.head(n);
    h.topLeftCorner(k, k) = nb.transpose() * hx.topLeftCorner(n, n) * nb;
    if (phase1) {
      g(k) = gx(n);
      cc(k) = c(n);
      const Vector cross = nb.transpose() * hx.col(n).head(n);
      h.col(k).head(k) = cross;
      h.row(k).head(k) = cross.transpose();
      h(k, k) = hx(n, n);
    }
  }
  Vector hc, hg;
  if (!spd_solve(h, cc, hc) || !spd_solve(h, g, hg)) return 1.0;
  const double denom = cc.dot(hc);
  if (!(denom > 0.0)) return 1.0;
  const double tau = -cc.dot(hg) / denom;
  return std::clamp(tau, 1e-8, 1e8);
}

inline BarrierSolver::Centering BarrierSolver::center(Vector& z, double& t, bool phase1, double tau,
                                  SolveResult& res) const {
  // The linear τ-term is tracked separately: folded into f it dwarfs the
  // barrier and the Armijo test loses every digit it needs.
  double f = barrier(z, t, phase1, 0.0);
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  double last = std::numeric_limits<double>::infinity();
  for (int inner = 0; inner < 150; ++inner) {
    if (res.iterations >= settings_.max_iterations) return Centering::Failed;
    const NewtonStep step = newton(z, t, phase1, tau);
    ++res.iterations;
    if (!step.ok) return Centering::Failed;
    if (step.decrement2 / 2.0 <= settings_.center_tol) return Centering::Exact;
    last = step.decrement2;
    const Centering stuck = step.decrement2 / 2.0 <= 0.1 ? Centering::Approximate : Centering::Failed;
    // Rounding-limited Newton creeps near the center; give up once the
    // decrement stops halving there. Far out, a decrement near 1 can be a
    // free ray being followed to the ball.
    if (step.decrement2 >= 0.2 || step.decrement2 < 0.5 * best) {
      best = step.decrement2;
      since_best = 0;
    } else if (++since_best >= 8) {
      return stuck;
    }
    const double slope =
        phase1 ? -tau * step.dt : tau * objective_.dot(basis_ ? Vector(*basis_ * step.dz) : step.dz);
    double alpha = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      const Vector zn = z + alpha * step.dz;
      const double tn = t + alpha * step.dt;
      const double fn = barrier(zn, tn, phase1, 0.0);
      if (std::isfinite(fn) && (fn - f) + alpha * slope <= -0.25 * alpha * step.decrement2) {
        z = zn;
        t = tn;
        f = fn;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    // No decrease representable in floating point. The decrement is affine
    // invariant, so a fixed threshold says whether that is close enough.
    if (!accepted) return stuck;
    if (phase1 && !problem_.objective && t > 0.0 && t >= 0.999 * settings_.margin_cap) {
      return Centering::Exact;
    }
  }
  return last / 2.0 <= 0.1 ? Centering::Approximate : Centering::Failed;
}

inline void BarrierSolver::finalize(const Vector& z, SolveResult& res) const {
  const Vector x = to_x(z);
  res.x = x;
  res.objective = objective_.dot(x);
  res.margins.clear();
  res.eps.clear();
  res.worst_margin = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < lmis_.size(); ++k) {
    const double m = psd_margin(SymmetricMatrix(evaluate(problem_.inequalities[k], layout_, x)));
    res.margins.push_back(m);
    res.eps.push_back(lmis_[k].eps);
    res.worst_margin = std::min(res.worst_margin, m - lmis_[k].eps);
  }
  res.equality_residual = eq_a_.rows() > 0 ? (eq_a_ * x - eq_b_).norm() : 0.0;
  res.ball_active = x.norm() >= 0.5 * settings_.ball_radius;
}

inline SolveResult BarrierSolver::run() {
  SolveResult res;
  const Index n = layout_.dimension();

  // Equality elimination: x = x0 + N z.
  if (eq_a_.rows() > 0) {
    x0_ = min_norm_solve(eq_a_, eq_b_);
    const double r = (eq_a_ * x0_ - eq_b_).norm();
    if (r > kEqualityTolerance * std::max(1.0, eq_b_.norm())) {
      res.status = Status::Infeasible;
      res.message = "linear equalities are inconsistent (residual " + std::to_string(r) + ")";
      res.x = x0_;
      return res;
    }
    basis_ = kernel_basis(eq_a_);
  } else {
    x0_ = Vector::Zero(n);
  }

  Vector z = Vector::Zero(nz());
  if (lmis_.empty()) {
    finalize(z, res);
    if (objective_.isZero() || (basis_ && (basis_->transpose() * objective_).isZero()) ||
        (!basis_ && n == 0)) {
      res.status = Status::Feasible;
      res.assignment = unpack_assignment(layout_, res.x);
      res.message = "no inequalities";
    } else {
      res.status = Status::Inconclusive;
      res.message = "objective is unbounded without inequalities";
    }
    return res;
  }

  // Phase 1: maximize the common margin t above each ε_k.
  double min_slack = std::numeric_limits<double>::infinity();
  {
    const Vector x = to_x(z);
    for (std::size_t k = 0; k < lmis_.size(); ++k) {
      const double m = psd_margin(SymmetricMatrix(evaluate(problem_.inequalities[k], layout_, x)));
      min_slack = std::min(min_slack, m - lmis_[k].eps);
    }
  }
  double t = std::min(min_slack - 1.0, settings_.margin_cap - 1.0);
  Index nu1 = 2;  // ball + cap
  for (const auto& c : lmis_) nu1 += c.size;

  double tau = initial_tau(z, t, true);
  bool phase1_done = false;
  while (!phase1_done) {
    const Centering state = center(z, t, true, tau, res);
    const bool centered = state == Centering::Exact;
    const double gap = static_cast<double>(nu1) / tau;
    res.gap = gap;
    res.margin_bound = t + gap;
    if (res.iterations >= settings_.max_iterations) {
      finalize(z, res);
      res.status = Status::Inconclusive;
      res.message = "iteration limit reached while maximizing the margin";
      return res;
    }
    if (state == Centering::Failed && !(t > 0.0)) {
      finalize(z, res);
      res.status = Status::Inconclusive;
      res.message = "Newton system became numerically singular while maximizing the margin";
      return res;
    }
    if (t > 0.0) {
      if (problem_.objective) {
        phase1_done = true;
        break;
      }
      if (gap <= 1e-3 * std::max(1.0, std::abs(t)) || t >= 0.999 * settings_.margin_cap) {
        finalize(z, res);
        res.status = res.worst_margin >= -kMarginSlack ? Status::Feasible : Status::Inconclusive;
        if (res.status == Status::Feasible) res.assignment = unpack_assignment(layout_, res.x);
        res.message = "strictly feasible point found";
        return res;
      }
    } else if (centered && t + gap < 0.0) {
      finalize(z, res);
      res.status = Status::Infeasible;
      std::ostringstream os;
      os << "margin maximization optimum is below the required margin (upper bound " << t + gap
         << " above eps)";
      res.message = os.str();
      return res;
    } else if (gap <= settings_.tol * std::max(1.0, std::abs(t))) {
      finalize(z, res);
      res.status = Status::Inconclusive;
      res.message = "maximal margin coincides with the required margin within tolerance";
      return res;
    }
    tau *= settings_.barrier_growth;
  }

  // Phase 2: minimize the objective over the ε-tightened set.
  Index nu2 = 1;
  for (const auto& c : lmis_) nu2 += c.size;
  tau = initial_tau(z, 0.0, false);
  for (;;) {
    const Centering state = center(z, t, false, tau, res);
    const bool centered = state != Centering::Failed;
    const double gap = static_cast<double>(nu2) / tau;
    const double obj = objective_.dot(to_x(z));
    res.gap = gap;
    const bool converged = centered && gap <= settings_.tol * std::max(1.0, std::abs(obj));
    const bool stalled = !centered || res.iterations >= settings_.max_iterations;
    if (converged || stalled) {
      finalize(z, res);
      const bool inside = res.worst_margin >= -kMarginSlack;
      if (converged && inside) {
        res.status = Status::Feasible;
        res.message = "optimal within tolerance";
      } else if (inside && std::isfinite(gap)) {
        // A strictly feasible point certifies the inequalities; only the
        // objective is short of the target, by at most about the gap.
        res.status = Status::Feasible;
        std::ostringstream os;
        os << "strictly feasible; objective accurate to duality gap " << gap;
        res.message = os.str();
      } else {
        res.status = Status::Inconclusive;
        res.message = res.iterations >= settings_.max_iterations
                          ? "iteration limit reached while optimizing"
                          : "Newton iterations stalled while optimizing";
      }
      if (res.status == Status::Feasible && res.ball_active) {
        res.status = Status::Inconclusive;
        res.message = "objective appears unbounded (iterate reached the bounding ball)";
      }
      if (res.status == Status::Feasible) res.assignment = unpack_assignment(layout_, res.x);
      return res;
    }
    tau *= settings_.barrier_growth;
  }
}

}  // namespace detail

/// Solves a feasibility (no objective) or linear-objective problem.
inline SolveResult solve(const SdpProblem& problem, const Settings& settings = {}) {
  problem.validate();
  detail::BarrierSolver solver(problem, settings);
  return solver.run();
}

}  // namespace ddc::sdp
