// Copyright 2026 The lsmpc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "lsmpc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <stdexcept>

namespace lsmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// An inequality atom in "a'x >= b" orientation. General rows keep their own
// coefficients; bound atoms are +-unit rows and are special-cased to avoid
// materializing them.
struct Atom {
  enum class Kind { general, lower, upper } kind;
  int index;  // row index or variable index
};

class WorkingSetSolver {
 public:
  WorkingSetSolver(const Eigen::MatrixXd& H, const Eigen::VectorXd& g,
                   const Eigen::MatrixXd& Aeq, const Eigen::VectorXd& beq,
                   const Eigen::MatrixXd& Ain, const Eigen::VectorXd& bin,
                   const Eigen::VectorXd& lb, const Eigen::VectorXd& ub)
      : H_(H), g_(g), Aeq_(Aeq), beq_(beq), Ain_(Ain), bin_(bin), lb_(lb), ub_(ub),
        n_(static_cast<int>(g.size())), m_eq_(static_cast<int>(beq.size())),
        m_in_(static_cast<int>(bin.size())) {
    factorize_hessian();
    hinv_g_ = llt_.solve(g_);
  }

  int atom_count() const { return m_in_ + 2 * n_; }

  Atom atom(int id) const {
    if (id < m_in_) return {Atom::Kind::general, id};
    if (id < m_in_ + n_) return {Atom::Kind::lower, id - m_in_};
    return {Atom::Kind::upper, id - m_in_ - n_};
  }

  // a'x for the atom's row.
  double atom_value(int id, const Eigen::VectorXd& x) const {
    const Atom a = atom(id);
    switch (a.kind) {
      case Atom::Kind::general: return Ain_.row(a.index).dot(x);
      case Atom::Kind::lower: return x[a.index];
      case Atom::Kind::upper: return -x[a.index];
    }
    return 0.0;
  }

  double atom_rhs(int id) const {
    const Atom a = atom(id);
    switch (a.kind) {
      case Atom::Kind::general: return bin_[a.index];
      case Atom::Kind::lower: return lb_[a.index];
      case Atom::Kind::upper: return -ub_[a.index];
    }
    return 0.0;
  }

  bool atom_exists(int id) const { return std::isfinite(atom_rhs(id)); }

  Eigen::VectorXd atom_row(int id) const {
    const Atom a = atom(id);
    Eigen::VectorXd r = Eigen::VectorXd::Zero(n_);
    switch (a.kind) {
      case Atom::Kind::general: r = Ain_.row(a.index).transpose(); break;
      case Atom::Kind::lower: r[a.index] = 1.0; break;
      case Atom::Kind::upper: r[a.index] = -1.0; break;
    }
    return r;
  }

  void set_working(const std::vector<int>& atoms) {
    working_.clear();
    rebuild();  // equality rows only
    for (int id : atoms) {
      if (id >= 0 && id < atom_count() && atom_exists(id) && !contains(id)) {
        try_add(id);  // stale or dependent warm entries are silently skipped
      }
    }
  }

  // As set_working but without per-atom pivot tests; one factorization for
  // the whole batch.  The caller guarantees independence.
  void set_working_unchecked(const std::vector<int>& atoms) {
    working_.clear();
    for (int id : atoms) {
      if (id >= 0 && id < atom_count() && atom_exists(id) && !contains(id)) {
        working_.push_back(id);
      }
    }
    rebuild();
  }

  // Adds the atom unless its row is (near) linearly dependent on the
  // equalities plus the current working set, which would make the KKT system
  // singular and the multipliers meaningless.  The test is the Schur-complement
  // pivot of the candidate row.
  bool try_add(int id) {
    const Eigen::VectorXd row = atom_row(id);
    const Eigen::VectorXd y = llt_.solve(row);
    const double diag = row.dot(y);
    double pivot = diag;
    const int k = total_rows();
    if (k > 0) {
      const Eigen::VectorXd a = C_ * y;
      pivot -= a.dot(schur_llt_.solve(a));
    }
    if (!(pivot > 1e-8 * std::max(diag, 1e-300))) return false;
    working_.push_back(id);
    Y_.conservativeResize(n_, k + 1);
    Y_.col(k) = y;
    rhs_.conservativeResize(k + 1);
    rhs_[k] = atom_rhs(id);
    C_.conservativeResize(k + 1, n_);
    C_.row(k) = row.transpose();
    refactor_schur();
    return true;
  }

  // Expansion coefficients of the atom's row on [equalities; working atoms].
  // Exact when the row is dependent, which is the only case that needs it.
  Eigen::VectorXd dependency(int id) const {
    const Eigen::VectorXd y = llt_.solve(atom_row(id));
    return schur_llt_.solve(C_ * y);
  }

  void drop(int working_pos) {
    // Swap-with-last keeps C_, rhs_, Y_ and working_ aligned.
    const int k = m_eq_ + working_pos;
    const int last = total_rows() - 1;
    if (k != last) {
      C_.row(k) = C_.row(last);
      rhs_[k] = rhs_[last];
      Y_.col(k) = Y_.col(last);
      working_[static_cast<std::size_t>(working_pos)] = working_.back();
    }
    working_.pop_back();
    C_.conservativeResize(last, Eigen::NoChange);
    rhs_.conservativeResize(last);
    Y_.conservativeResize(Eigen::NoChange, last);
    refactor_schur();
  }

  // Solves the equality-constrained QP for the current working set.
  // Returns x and the multipliers for [equalities; working atoms].
  void solve(Eigen::VectorXd& x, Eigen::VectorXd& mult) {
    const int k = total_rows();
    if (k == 0) {
      x = -hinv_g_;
      mult.resize(0);
      return;
    }
    const Eigen::VectorXd rhs = rhs_ + Y_.transpose() * g_;
    mult = schur_llt_.solve(rhs);
    x = Y_ * mult - hinv_g_;
  }

  const std::vector<int>& working() const { return working_; }
  bool contains(int id) const {
    return std::find(working_.begin(), working_.end(), id) != working_.end();
  }
  int total_rows() const { return m_eq_ + static_cast<int>(working_.size()); }

  // Rebuilds C_, Y_ and the Schur factor for the current working set.  Also
  // used periodically to purge the drift that conservativeResize updates
  // accumulate over long add/drop sequences.
  void rebuild() {
    const int k = total_rows();
    C_.resize(k, n_);
    rhs_.resize(k);
    for (int i = 0; i < m_eq_; ++i) {
      C_.row(i) = Aeq_.row(i);
      rhs_[i] = beq_[i];
    }
    for (std::size_t w = 0; w < working_.size(); ++w) {
      C_.row(m_eq_ + static_cast<int>(w)) = atom_row(working_[w]).transpose();
      rhs_[m_eq_ + static_cast<int>(w)] = atom_rhs(working_[w]);
    }
    Y_ = llt_.solve(C_.transpose());
    refactor_schur();
  }

 private:
  void factorize_hessian() {
    Eigen::MatrixXd H = H_;
    double ridge = 0.0;
    const double scale = std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
    for (int attempt = 0; attempt < 8; ++attempt) {
      llt_.compute(H);
      if (llt_.info() == Eigen::Success) return;
      ridge = ridge == 0.0 ? 1e-12 * scale : ridge * 100.0;
      H = H_ + ridge * Eigen::MatrixXd::Identity(n_, n_);
    }
    throw std::runtime_error("solve_qp: Hessian is not positive definite");
  }

  void refactor_schur() {
    const int k = total_rows();
    if (k == 0) return;
    Eigen::MatrixXd S = C_ * Y_;
    S = 0.5 * (S + S.transpose());
    const double scale = std::max(1.0, S.diagonal().cwiseAbs().maxCoeff());
    double ridge = 0.0;
    for (int attempt = 0; attempt < 8; ++attempt) {
      schur_llt_.compute(S);
      if (schur_llt_.info() == Eigen::Success) return;
      // Rank-deficient working set (e.g. duplicated rows); regularize.
      ridge = ridge == 0.0 ? 1e-12 * scale : ridge * 100.0;
      S += ridge * Eigen::MatrixXd::Identity(k, k);
    }
    throw std::runtime_error("solve_qp: singular working-set system");
  }

  const Eigen::MatrixXd& H_;
  const Eigen::VectorXd& g_;
  const Eigen::MatrixXd& Aeq_;
  const Eigen::VectorXd& beq_;
  const Eigen::MatrixXd& Ain_;
  const Eigen::VectorXd& bin_;
  const Eigen::VectorXd& lb_;
  const Eigen::VectorXd& ub_;
  const int n_;
  const int m_eq_;
  const int m_in_;

  Eigen::LLT<Eigen::MatrixXd> llt_;        // of H (possibly ridged)
  Eigen::VectorXd hinv_g_;                 // H^{-1} g
  std::vector<int> working_;               // active inequality atoms
  Eigen::MatrixXd C_;                      // [Aeq; active rows]
  Eigen::VectorXd rhs_;                    // [beq; active rhs]
  Eigen::MatrixXd Y_;                      // H^{-1} C'
  Eigen::LLT<Eigen::MatrixXd> schur_llt_;  // of C H^{-1} C'
};

}  // namespace

QpResult solve_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& g,
                  const Eigen::MatrixXd& Aeq, const Eigen::VectorXd& beq,
                  const Eigen::MatrixXd& Ain, const Eigen::VectorXd& bin,
                  const Eigen::VectorXd& lb, const Eigen::VectorXd& ub,
                  const std::vector<int>& warm_active, const QpOptions& options) {
  const int n = static_cast<int>(g.size());
  const int m_in = static_cast<int>(bin.size());
  Eigen::VectorXd lo = lb.size() == n ? lb : Eigen::VectorXd::Constant(n, -kInf);
  Eigen::VectorXd hi = ub.size() == n ? ub : Eigen::VectorXd::Constant(n, kInf);

  WorkingSetSolver ws(H, g, Aeq, beq, Ain, bin, lo, hi);
  if (options.warm_unchecked) {
    ws.set_working_unchecked(warm_active);
  } else {
    ws.set_working(warm_active);
  }

  QpResult out;
  out.lam_in = Eigen::VectorXd::Zero(m_in);
  out.lam_lo = Eigen::VectorXd::Zero(n);
  out.lam_hi = Eigen::VectorXd::Zero(n);

  Eigen::VectorXd x, mult;
  int last_dropped = -1;
  std::vector<int> rejected;  // dependent atoms, retried after the set changes
  const auto is_rejected = [&rejected](int id) {
    return std::find(rejected.begin(), rejected.end(), id) != rejected.end();
  };
  for (out.iterations = 0; out.iterations < options.max_iter; ++out.iterations) {
    if (out.iterations > 0 && out.iterations % 64 == 0) ws.rebuild();
    // Past half the budget, fall back to Bland's rule (lowest eligible id for
    // both add and drop) to break selection cycles.
    const bool bland = out.iterations >= options.max_iter / 2;
    ws.solve(x, mult);

    // Drop the working atom with the most negative multiplier, if any.
    int drop_pos = -1;
    double worst_mult = -options.mult_tol;
    const auto& working = ws.working();
    const int m_eq = static_cast<int>(beq.size());
    for (std::size_t w = 0; w < working.size(); ++w) {
      const double lam = mult[m_eq + static_cast<int>(w)];
      if (lam >= -options.mult_tol) continue;
      if (bland) {
        if (drop_pos < 0 || working[w] < working[static_cast<std::size_t>(drop_pos)])
          drop_pos = static_cast<int>(w);
      } else if (lam < worst_mult) {
        worst_mult = lam;
        drop_pos = static_cast<int>(w);
      }
    }

    // Find the most violated non-working atom.
    int add_id = -1;
    double worst_violation = options.feas_tol;
    for (int id = 0; id < ws.atom_count(); ++id) {
      if (!ws.atom_exists(id) || ws.contains(id) || is_rejected(id)) continue;
      const double rhs = ws.atom_rhs(id);
      const double viol = (rhs - ws.atom_value(id, x)) / std::max(1.0, std::abs(rhs));
      if (viol > worst_violation && id != last_dropped) {
        worst_violation = viol;
        add_id = id;
        if (bland) break;
      }
    }
    if (add_id == -1 && last_dropped >= 0 && !ws.contains(last_dropped) &&
        ws.atom_exists(last_dropped) && !is_rejected(last_dropped)) {
      // Allow re-adding the last dropped atom only when nothing else violates.
      const double rhs = ws.atom_rhs(last_dropped);
      const double viol =
          (rhs - ws.atom_value(last_dropped, x)) / std::max(1.0, std::abs(rhs));
      if (viol > options.feas_tol) add_id = last_dropped;
    }

    const bool dbg = std::getenv("LSMPC_QP_DEBUG") != nullptr;
    if (dbg)
      std::fprintf(stderr, "qp it=%d add=%d viol=%.3e drop_pos=%d mult=%.3e ws=%zu\n",
                   out.iterations, add_id, worst_violation, drop_pos, worst_mult,
                   working.size());
    if (add_id >= 0) {
      if (ws.try_add(add_id)) {
        rejected.clear();
        continue;
      }
      // The violated row is a combination of the working rows.  Release the
      // working atom with the smallest multiplier per unit of positive
      // dependency coefficient, then pin the new row in its place.  When no
      // working atom carries a positive coefficient the dependence lies in the
      // equalities and the row cannot be satisfied.
      const Eigen::VectorXd mu = ws.dependency(add_id);
      int rel_pos = -1;
      double best_ratio = kInf;
      for (std::size_t w = 0; w < working.size(); ++w) {
        const double m = mu[m_eq + static_cast<int>(w)];
        if (m <= 1e-9) continue;
        const double ratio = std::max(0.0, mult[m_eq + static_cast<int>(w)]) / m;
        if (ratio < best_ratio) {
          best_ratio = ratio;
          rel_pos = static_cast<int>(w);
        }
      }
      if (rel_pos >= 0) {
        last_dropped = working[static_cast<std::size_t>(rel_pos)];
        ws.drop(rel_pos);
        if (ws.try_add(add_id)) {
          rejected.clear();
          continue;
        }
      }
      if (dbg) std::fprintf(stderr, "  reject %d\n", add_id);
      rejected.push_back(add_id);
    }
    if (drop_pos >= 0) {
      last_dropped = working[static_cast<std::size_t>(drop_pos)];
      ws.drop(drop_pos);
      rejected.clear();
      continue;
    }
    if (add_id >= 0) continue;  // rejected add, nothing to drop: rescan
    // KKT satisfied.
    break;
  }

  // Final violation scan (also covers the max_iter exit).
  double max_violation = 0.0;
  for (int id = 0; id < ws.atom_count(); ++id) {
    if (!ws.atom_exists(id)) continue;
    const double rhs = ws.atom_rhs(id);
    const double viol = (rhs - ws.atom_value(id, x)) / std::max(1.0, std::abs(rhs));
    max_violation = std::max(max_violation, viol);
  }

  out.x = x;
  out.max_violation = max_violation;
  const int m_eq = static_cast<int>(beq.size());
  out.lam_eq = mult.size() >= m_eq ? Eigen::VectorXd(mult.head(m_eq))
                                   : Eigen::VectorXd(Eigen::VectorXd::Zero(m_eq));
  const auto& working = ws.working();
  for (std::size_t w = 0; w < working.size(); ++w) {
    const double lam = std::max(0.0, mult[m_eq + static_cast<int>(w)]);
    const int id = working[w];
    if (id < m_in) {
      out.lam_in[id] = lam;
    } else if (id < m_in + n) {
      out.lam_lo[id - m_in] = lam;
    } else {
      out.lam_hi[id - m_in - n] = lam;
    }
  }
  out.active = working;

  if (out.iterations >= options.max_iter) {
    out.status = max_violation > 1e-7 ? QpStatus::infeasible : QpStatus::max_iter;
  } else {
    out.status = max_violation > 1e-7 ? QpStatus::infeasible : QpStatus::ok;
  }
  return out;
}

}  // namespace lsmpc
