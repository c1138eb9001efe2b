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
//
// Small dense SQP solver for the optimal control problems in this project:
// damped-BFGS Hessian approximation, active-set QP subproblems, an l1 merit
// line search and elastic (slack) relaxation when a subproblem's linearized
// constraints are inconsistent. Problems are plain callbacks; no expression
// graphs. Deterministic: same problem and start point give the same iterates.

#ifndef LSMPC_NLP_HPP_
#define LSMPC_NLP_HPP_

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

namespace lsmpc {

// NLP in the form
//   min f(x)   s.t.  c_eq(x) = 0,  c_in(x) >= 0,  lb <= x <= ub.
struct NlpProblem {
  int n = 0;
  int m_eq = 0;
  int m_in = 0;
  Eigen::VectorXd lb, ub;  // empty => unbounded on that side

  // f(x); fills *grad (size n) when non-null.
  std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)> objective;
  // c(x); fills *jac (m x n) when non-null. May be empty when m == 0.
  std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&, Eigen::MatrixXd*)> eq_constraints;
  std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&, Eigen::MatrixXd*)> in_constraints;

  // When true, the solver computes the corresponding derivative by central
  // finite differences instead of asking the callback for it.
  bool fd_gradient = false;
  bool fd_eq_jacobian = false;
  bool fd_in_jacobian = false;

  // Optional positive-definite seed for the BFGS approximation, e.g. the
  // exact Hessian of a quadratic tracking cost. Empty => identity.
  Eigen::MatrixXd hessian_init;
};

struct SqpOptions {
  double tol = 1e-6;       // KKT residual tolerance (stationarity/feasibility/complementarity)
  int max_iter = 100;
  double fd_step = 1e-6;   // central finite-difference step
  double elastic_penalty = 1e6;
  std::string trace_path;  // when set, writes "iter,merit,kkt,step" CSV rows
};

enum class NlpStatus { converged, max_iterations, line_search_failure };

struct NlpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd lam_eq, lam_in, lam_lo, lam_hi;
  double objective = 0.0;
  double kkt_stationarity = 0.0;
  double kkt_feasibility = 0.0;
  double kkt_complementarity = 0.0;
  double kkt() const;
  int iterations = 0;
  int elastic_steps = 0;  // QP subproblems that needed slack relaxation
  NlpStatus status = NlpStatus::max_iterations;
  std::vector<int> active_set;  // final QP working set, for warm starts
  double wall_seconds = 0.0;
};

NlpSolution solve_sqp(const NlpProblem& problem, const Eigen::VectorXd& x0,
                      const SqpOptions& options = {}, const std::vector<int>* warm_active = nullptr);

// Compares the problem's declared derivatives against central finite
// differences at x. Errors are max over entries of |analytic - fd| /
// max(1, |fd|); a gradient that is wrong by a factor 2 therefore reports an
// error of about 1.
struct FdCheckReport {
  double objective_gradient_error = 0.0;
  double eq_jacobian_error = 0.0;
  double in_jacobian_error = 0.0;
  double max_error() const;
};
FdCheckReport finite_diff_check(const NlpProblem& problem, const Eigen::VectorXd& x,
                                double step = 1e-6);

}  // namespace lsmpc

#endif  // LSMPC_NLP_HPP_
