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
// Dense convex QP solver used for the SQP subproblems:
//
//   min  1/2 x'Hx + g'x
//   s.t. Aeq x  = beq
//        Ain x >= bin
//        lb <= x <= ub        (entries may be +-inf)
//
// H must be positive definite (the SQP layer guarantees this via damped
// BFGS). Inequalities and bounds are handled with a working-set iteration:
// equalities plus the working set are solved exactly through a Schur
// complement on the Cholesky factor of H, then violated rows are added and
// rows with negative multipliers are dropped until the KKT conditions hold.

#ifndef LSMPC_QP_HPP_
#define LSMPC_QP_HPP_

#include <Eigen/Dense>
#include <vector>

namespace lsmpc {

struct QpOptions {
  int max_iter = 400;
  double feas_tol = 1e-9;  // constraint violation tolerance (scaled)
  double mult_tol = 1e-9;  // multiplier negativity tolerance
  // Skip the linear-independence screen on the warm-start atoms.  Only for
  // callers that construct a set which is independent by design.
  bool warm_unchecked = false;
};

enum class QpStatus { ok, max_iter, infeasible };

struct QpResult {
  Eigen::VectorXd x;
  Eigen::VectorXd lam_eq;  // free sign
  Eigen::VectorXd lam_in;  // >= 0, one per general inequality row
  Eigen::VectorXd lam_lo;  // >= 0, one per variable
  Eigen::VectorXd lam_hi;  // >= 0, one per variable
  QpStatus status = QpStatus::ok;
  int iterations = 0;
  double max_violation = 0.0;
  // Active inequality atoms (generals, then lower bounds, then upper bounds)
  // for warm starting a related QP.
  std::vector<int> active;
};

QpResult solve_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& g,
                  const Eigen::MatrixXd& Aeq, const Eigen::VectorXd& beq,
                  const Eigen::MatrixXd& Ain, const Eigen::VectorXd& bin,
                  const Eigen::VectorXd& lb, const Eigen::VectorXd& ub,
                  const std::vector<int>& warm_active = {}, const QpOptions& options = {});

}  // namespace lsmpc

#endif  // LSMPC_QP_HPP_
