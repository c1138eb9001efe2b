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

#include "lsmpc/nlp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <stdexcept>

#include "lsmpc/qp.hpp"

namespace lsmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Evaluation {
  double f = 0.0;
  Eigen::VectorXd grad;
  Eigen::VectorXd c_eq, c_in;
  Eigen::MatrixXd j_eq, j_in;
};

class Evaluator {
 public:
  Evaluator(const NlpProblem& p, double fd_step) : p_(p), fd_step_(fd_step) {}

  double value(const Eigen::VectorXd& x, Eigen::VectorXd* c_eq, Eigen::VectorXd* c_in) const {
    const double f = p_.objective(x, nullptr);
    if (p_.m_eq > 0 && c_eq) p_.eq_constraints(x, *c_eq, nullptr);
    if (p_.m_in > 0 && c_in) p_.in_constraints(x, *c_in, nullptr);
    return f;
  }

  Evaluation full(const Eigen::VectorXd& x) const {
    Evaluation e;
    if (p_.fd_gradient) {
      e.f = p_.objective(x, nullptr);
      e.grad = fd_gradient(x);
    } else {
      e.grad.resize(p_.n);
      e.f = p_.objective(x, &e.grad);
    }
    if (p_.m_eq > 0) {
      if (p_.fd_eq_jacobian) {
        p_.eq_constraints(x, e.c_eq, nullptr);
        e.j_eq = fd_jacobian(p_.eq_constraints, x, p_.m_eq);
      } else {
        p_.eq_constraints(x, e.c_eq, &e.j_eq);
      }
    } else {
      e.c_eq.resize(0);
      e.j_eq.resize(0, p_.n);
    }
    if (p_.m_in > 0) {
      if (p_.fd_in_jacobian) {
        p_.in_constraints(x, e.c_in, nullptr);
        e.j_in = fd_jacobian(p_.in_constraints, x, p_.m_in);
      } else {
        p_.in_constraints(x, e.c_in, &e.j_in);
      }
    } else {
      e.c_in.resize(0);
      e.j_in.resize(0, p_.n);
    }
    return e;
  }

  Eigen::VectorXd fd_gradient(const Eigen::VectorXd& x) const {
    Eigen::VectorXd g(p_.n);
    Eigen::VectorXd xp = x;
    for (int j = 0; j < p_.n; ++j) {
      const double h = step_for(x[j]);
      xp[j] = x[j] + h;
      const double fp = p_.objective(xp, nullptr);
      xp[j] = x[j] - h;
      const double fm = p_.objective(xp, nullptr);
      xp[j] = x[j];
      g[j] = (fp - fm) / (2.0 * h);
    }
    return g;
  }

  Eigen::MatrixXd fd_jacobian(
      const std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&, Eigen::MatrixXd*)>& c,
      const Eigen::VectorXd& x, int m) const {
    Eigen::MatrixXd J(m, p_.n);
    Eigen::VectorXd xp = x, cp, cm;
    for (int j = 0; j < p_.n; ++j) {
      const double h = step_for(x[j]);
      xp[j] = x[j] + h;
      c(xp, cp, nullptr);
      xp[j] = x[j] - h;
      c(xp, cm, nullptr);
      xp[j] = x[j];
      J.col(j) = (cp - cm) / (2.0 * h);
    }
    return J;
  }

 private:
  double step_for(double xj) const { return fd_step_ * std::max(1.0, std::abs(xj)); }

  const NlpProblem& p_;
  double fd_step_;
};

double constraint_violation_l1(const Evaluation& e) {
  double v = 0.0;
  for (Eigen::Index i = 0; i < e.c_eq.size(); ++i) v += std::abs(e.c_eq[i]);
  for (Eigen::Index i = 0; i < e.c_in.size(); ++i) v += std::max(0.0, -e.c_in[i]);
  return v;
}

double violation_l1(const Eigen::VectorXd& c_eq, const Eigen::VectorXd& c_in) {
  double v = 0.0;
  for (Eigen::Index i = 0; i < c_eq.size(); ++i) v += std::abs(c_eq[i]);
  for (Eigen::Index i = 0; i < c_in.size(); ++i) v += std::max(0.0, -c_in[i]);
  return v;
}

}  // namespace

double NlpSolution::kkt() const {
  return std::max({kkt_stationarity, kkt_feasibility, kkt_complementarity});
}

double FdCheckReport::max_error() const {
  return std::max({objective_gradient_error, eq_jacobian_error, in_jacobian_error});
}

NlpSolution solve_sqp(const NlpProblem& problem, const Eigen::VectorXd& x0,
                      const SqpOptions& options, const std::vector<int>* warm_active) {
  const auto t_start = std::chrono::steady_clock::now();
  const int n = problem.n;
  if (x0.size() != n) throw std::invalid_argument("solve_sqp: start point has wrong size");

  const Eigen::VectorXd lb =
      problem.lb.size() == n ? problem.lb : Eigen::VectorXd::Constant(n, -kInf);
  const Eigen::VectorXd ub =
      problem.ub.size() == n ? problem.ub : Eigen::VectorXd::Constant(n, kInf);

  Evaluator eval(problem, options.fd_step);

  Eigen::VectorXd x = x0.cwiseMax(lb).cwiseMin(ub);
  Evaluation e = eval.full(x);

  Eigen::MatrixXd B;
  if (problem.hessian_init.rows() == n && problem.hessian_init.cols() == n) {
    B = problem.hessian_init;
  } else {
    B = Eigen::MatrixXd::Identity(n, n);
  }
  const Eigen::MatrixXd B0 = B;

  std::FILE* trace = nullptr;
  if (!options.trace_path.empty()) {
    trace = std::fopen(options.trace_path.c_str(), "w");
    if (trace) std::fprintf(trace, "iter,merit,kkt,step\n");
  }

  NlpSolution sol;
  sol.lam_eq = Eigen::VectorXd::Zero(problem.m_eq);
  sol.lam_in = Eigen::VectorXd::Zero(problem.m_in);
  sol.lam_lo = Eigen::VectorXd::Zero(n);
  sol.lam_hi = Eigen::VectorXd::Zero(n);

  std::vector<int> active = warm_active ? *warm_active : std::vector<int>{};
  double nu = 1.0;  // merit penalty weight
  int ls_failures = 0;

  auto finish = [&](NlpStatus status) {
    sol.x = x;
    sol.objective = e.f;
    sol.iterations = std::max(sol.iterations, 0);
    sol.status = status;
    sol.active_set = active;
    sol.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    if (trace) std::fclose(trace);
    return sol;
  };

  for (int iter = 0; iter < options.max_iter; ++iter) {
    sol.iterations = iter + 1;

    // --- QP subproblem around x ---
    const Eigen::VectorXd p_lb = lb - x;
    const Eigen::VectorXd p_ub = ub - x;
    QpOptions qp_opts;
    QpResult qp = solve_qp(B, e.grad, e.j_eq, -e.c_eq, e.j_in, -e.c_in, p_lb, p_ub, active,
                           qp_opts);

    if (qp.status == QpStatus::infeasible) {
      // Elastic relaxation: l1 slacks on every constraint, equalities
      // included.  Relaxing only part of the system lets the step trade
      // violation between constraint groups instead of reducing it; the full
      // relaxation is always feasible and its solution decreases the total
      // violation whenever the linearization allows it.
      ++sol.elastic_steps;
      const int me = problem.m_eq;
      const int m = problem.m_in;
      const int ns = 2 * me + m;
      const int ne = n + ns;
      Eigen::MatrixXd He = Eigen::MatrixXd::Zero(ne, ne);
      He.topLeftCorner(n, n) = B;
      He.bottomRightCorner(ns, ns) = 1e-8 * Eigen::MatrixXd::Identity(ns, ns);
      Eigen::VectorXd ge(ne);
      ge.head(n) = e.grad;
      // Fixed slack price: coupling it to the merit weight feeds the elastic
      // multipliers back into nu and the two grow without bound.
      ge.tail(ns).setConstant(options.elastic_penalty);
      Eigen::MatrixXd Aeq_e = Eigen::MatrixXd::Zero(me, ne);
      Aeq_e.leftCols(n) = e.j_eq;
      Aeq_e.middleCols(n, me) = Eigen::MatrixXd::Identity(me, me);
      Aeq_e.middleCols(n + me, me) = -Eigen::MatrixXd::Identity(me, me);
      Eigen::MatrixXd Ain_e = Eigen::MatrixXd::Zero(m, ne);
      Ain_e.leftCols(n) = e.j_in;
      Ain_e.rightCols(m) = Eigen::MatrixXd::Identity(m, m);
      Eigen::VectorXd lb_e = Eigen::VectorXd::Constant(ne, -kInf);
      Eigen::VectorXd ub_e = Eigen::VectorXd::Constant(ne, kInf);
      lb_e.head(n) = p_lb;
      ub_e.head(n) = p_ub;
      lb_e.tail(ns).setZero();
      // Warm pins: the zero side of each equality pair and every inequality
      // slack.  Distinct unit rows, so the set is independent by design, and
      // it keeps the first subproblem from chasing unbounded slack descent.
      // Rows that need a positive slack shed their pin through the main loop.
      QpOptions el_opts = qp_opts;
      el_opts.warm_unchecked = true;
      std::vector<int> pins;
      pins.reserve(static_cast<std::size_t>(me + m));
      for (int i = 0; i < me; ++i) {
        pins.push_back(e.c_eq[i] > 0.0 ? m + n + i : m + n + me + i);
      }
      for (int i = 0; i < m; ++i) pins.push_back(m + n + 2 * me + i);
      QpResult qe = solve_qp(He, ge, Aeq_e, -e.c_eq, Ain_e, -e.c_in, lb_e, ub_e, pins, el_opts);
      qp.x = qe.x.head(n);
      qp.lam_eq = qe.lam_eq;
      qp.lam_in = qe.lam_in;
      qp.lam_lo = qe.lam_lo.head(n);
      qp.lam_hi = qe.lam_hi.head(n);
      qp.active.clear();  // elastic working set does not transfer
    }
    active = qp.active;

    if (!qp.x.allFinite()) {
      ++ls_failures;
      if (ls_failures >= 2) return finish(NlpStatus::line_search_failure);
      B = B0;
      active.clear();
      continue;
    }

    const Eigen::VectorXd& p = qp.x;
    sol.lam_eq = qp.lam_eq;
    sol.lam_in = qp.lam_in;
    sol.lam_lo = qp.lam_lo;
    sol.lam_hi = qp.lam_hi;

    // --- KKT residuals of the original NLP at (x, lambda) ---
    Eigen::VectorXd stat = e.grad;
    if (problem.m_eq > 0) stat -= e.j_eq.transpose() * sol.lam_eq;
    if (problem.m_in > 0) stat -= e.j_in.transpose() * sol.lam_in;
    stat -= sol.lam_lo;
    stat += sol.lam_hi;
    sol.kkt_stationarity = stat.size() > 0 ? stat.cwiseAbs().maxCoeff() : 0.0;
    double feas = 0.0;
    for (Eigen::Index i = 0; i < e.c_eq.size(); ++i) feas = std::max(feas, std::abs(e.c_eq[i]));
    for (Eigen::Index i = 0; i < e.c_in.size(); ++i) feas = std::max(feas, -e.c_in[i]);
    sol.kkt_feasibility = feas;
    double compl_res = 0.0;
    for (Eigen::Index i = 0; i < e.c_in.size(); ++i) {
      compl_res = std::max(compl_res, std::abs(sol.lam_in[i] * e.c_in[i]));
    }
    for (int j = 0; j < n; ++j) {
      if (std::isfinite(lb[j])) compl_res = std::max(compl_res, std::abs(sol.lam_lo[j] * (x[j] - lb[j])));
      if (std::isfinite(ub[j])) compl_res = std::max(compl_res, std::abs(sol.lam_hi[j] * (ub[j] - x[j])));
    }
    sol.kkt_complementarity = compl_res;

    if (sol.kkt() <= options.tol) {
      if (trace) std::fprintf(trace, "%d,%.17g,%.17g,%.17g\n", iter, e.f, sol.kkt(), 0.0);
      return finish(NlpStatus::converged);
    }
    if (p.cwiseAbs().maxCoeff() < 1e-14) {
      // No step left; report the best we have.
      return finish(NlpStatus::max_iterations);
    }

    // --- l1 merit line search ---
    const double lam_max = std::max({sol.lam_eq.size() ? sol.lam_eq.cwiseAbs().maxCoeff() : 0.0,
                                     sol.lam_in.size() ? sol.lam_in.cwiseAbs().maxCoeff() : 0.0});
    // Track the multipliers with slow decay so one ill-conditioned iteration
    // cannot poison the merit for the rest of the solve; cap keeps phi
    // representable when the elastic duals are large.
    nu = std::min(std::max(1.5 * lam_max + 1e-2, 0.3 * nu), 1e8);
    const double viol0 = constraint_violation_l1(e);
    // Violation the step actually removes in the linearization.  A plain QP
    // step removes all of it; an elastic step may leave a residual, and
    // crediting the full amount would promise descent the step cannot deliver.
    const double viol_lin = violation_l1(e.c_eq + e.j_eq * p, e.c_in + e.j_in * p);
    const double removed = std::max(0.0, viol0 - viol_lin);
    if (removed > 1e-12) {
      // Raise the penalty until the predicted merit decrease covers the
      // objective model's growth along the step.
      const double growth = e.grad.dot(p) + 0.5 * p.dot(B * p);
      if (growth > 0.0) nu = std::min(std::max(nu, growth / (0.5 * removed)), 1e8);
    }
    const double phi0 = e.f + nu * viol0;
    double dir = e.grad.dot(p) - nu * removed;
    if (dir > -1e-16) dir = -1e-16;

    double alpha = 1.0;
    bool accepted = false;
    Eigen::VectorXd x_new;
    Eigen::VectorXd c_eq_new, c_in_new;
    double f_new = 0.0;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = x + alpha * p;
      f_new = eval.value(x_new, &c_eq_new, &c_in_new);
      const double phi = f_new + nu * violation_l1(c_eq_new, c_in_new);
      if (std::isfinite(phi) && phi <= phi0 + 0.1 * alpha * dir) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
      if (alpha < 1e-10) break;
    }
    if (trace) std::fprintf(trace, "%d,%.17g,%.17g,%.17g\n", iter, phi0, sol.kkt(), alpha);
    if (!accepted) {
      ++ls_failures;
      if (ls_failures >= 2) return finish(NlpStatus::line_search_failure);
      B = B0;  // reset curvature and retry from the same point
      active.clear();
      continue;
    }
    ls_failures = 0;

    // --- BFGS update with Powell damping ---
    Evaluation e_new = eval.full(x_new);
    Eigen::VectorXd grad_l_old = e.grad;
    Eigen::VectorXd grad_l_new = e_new.grad;
    if (problem.m_eq > 0) {
      grad_l_old -= e.j_eq.transpose() * sol.lam_eq;
      grad_l_new -= e_new.j_eq.transpose() * sol.lam_eq;
    }
    if (problem.m_in > 0) {
      grad_l_old -= e.j_in.transpose() * sol.lam_in;
      grad_l_new -= e_new.j_in.transpose() * sol.lam_in;
    }
    const Eigen::VectorXd s = x_new - x;
    Eigen::VectorXd yv = grad_l_new - grad_l_old;
    const Eigen::VectorXd Bs = B * s;
    const double sBs = s.dot(Bs);
    double sy = s.dot(yv);
    if (sBs > 0.0 && sy < 0.2 * sBs) {
      const double theta = 0.8 * sBs / (sBs - sy);
      yv = theta * yv + (1.0 - theta) * Bs;
      sy = s.dot(yv);
    }
    if (sy > 1e-12 * s.norm() * yv.norm() && sBs > 0.0) {
      B -= (Bs * Bs.transpose()) / sBs;
      B += (yv * yv.transpose()) / sy;
    }

    x = x_new;
    e = e_new;
  }

  return finish(NlpStatus::max_iterations);
}

FdCheckReport finite_diff_check(const NlpProblem& problem, const Eigen::VectorXd& x, double step) {
  Evaluator eval(problem, step);
  FdCheckReport report;

  auto mixed_error = [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& fd) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      for (Eigen::Index j = 0; j < a.cols(); ++j) {
        worst = std::max(worst,
                         std::abs(a(i, j) - fd(i, j)) / std::max(1.0, std::abs(fd(i, j))));
      }
    }
    return worst;
  };

  if (!problem.fd_gradient) {
    Eigen::VectorXd grad(problem.n);
    problem.objective(x, &grad);
    const Eigen::VectorXd fd = eval.fd_gradient(x);
    report.objective_gradient_error = mixed_error(grad, fd);
  }
  if (problem.m_eq > 0 && !problem.fd_eq_jacobian) {
    Eigen::VectorXd c;
    Eigen::MatrixXd J;
    problem.eq_constraints(x, c, &J);
    const Eigen::MatrixXd fd = eval.fd_jacobian(problem.eq_constraints, x, problem.m_eq);
    report.eq_jacobian_error = mixed_error(J, fd);
  }
  if (problem.m_in > 0 && !problem.fd_in_jacobian) {
    Eigen::VectorXd c;
    Eigen::MatrixXd J;
    problem.in_constraints(x, c, &J);
    const Eigen::MatrixXd fd = eval.fd_jacobian(problem.in_constraints, x, problem.m_in);
    report.in_jacobian_error = mixed_error(J, fd);
  }
  return report;
}

}  // namespace lsmpc
