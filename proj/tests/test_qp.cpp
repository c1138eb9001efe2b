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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "lsmpc/qp.hpp"
#include "lsmpc/stats.hpp"

using namespace lsmpc;

namespace {
const double kInf = std::numeric_limits<double>::infinity();

Eigen::VectorXd no_bounds(int n, double sign) {
  return Eigen::VectorXd::Constant(n, sign * kInf);
}
}  // namespace

TEST_CASE("unconstrained solve") {
  Eigen::MatrixXd h(2, 2);
  h << 2, 0, 0, 4;
  Eigen::VectorXd g(2);
  g << -2, -8;
  const QpResult r = solve_qp(h, g, Eigen::MatrixXd(0, 2), Eigen::VectorXd(0),
                              Eigen::MatrixXd(0, 2), Eigen::VectorXd(0),
                              no_bounds(2, -1), no_bounds(2, 1));
  REQUIRE(r.status == QpStatus::ok);
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(r.x[1] == doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("equality constrained oracle") {
  // min 1/2 (x0^2 + x1^2) with x0 + x1 = 2: solution (1, 1), multiplier +1
  // under the convention H x + g - Aeq' lam = 0.
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(2, 2);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd aeq(1, 2);
  aeq << 1, 1;
  Eigen::VectorXd beq(1);
  beq << 2;
  const QpResult r = solve_qp(h, g, aeq, beq, Eigen::MatrixXd(0, 2),
                              Eigen::VectorXd(0), no_bounds(2, -1), no_bounds(2, 1));
  REQUIRE(r.status == QpStatus::ok);
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-10));
  // Stationarity residual with the returned multipliers.
  const Eigen::VectorXd grad = h * r.x + g - aeq.transpose() * r.lam_eq;
  CHECK(grad.norm() < 1e-9);
  CHECK(r.lam_eq[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("active box bound") {
  // min 1/2 ||x - (3, -3)||^2 inside [-1, 1]^2: clipped corner.
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(2, 2);
  Eigen::VectorXd g(2);
  g << -3, 3;
  Eigen::VectorXd lb = Eigen::VectorXd::Constant(2, -1);
  Eigen::VectorXd ub = Eigen::VectorXd::Constant(2, 1);
  const QpResult r = solve_qp(h, g, Eigen::MatrixXd(0, 2), Eigen::VectorXd(0),
                              Eigen::MatrixXd(0, 2), Eigen::VectorXd(0), lb, ub);
  REQUIRE(r.status == QpStatus::ok);
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(r.x[1] == doctest::Approx(-1.0).epsilon(1e-10));
  CHECK(r.lam_hi[0] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(r.lam_lo[1] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(r.lam_hi[1] == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("general inequality becomes active only when it binds") {
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(2, 2);
  Eigen::VectorXd g(2);
  Eigen::MatrixXd ain(1, 2);
  ain << 1, 1;
  Eigen::VectorXd bin(1);
  bin << 1;  // x0 + x1 >= 1

  g << -2, -2;  // unconstrained optimum (2, 2) already satisfies the row
  QpResult r = solve_qp(h, g, Eigen::MatrixXd(0, 2), Eigen::VectorXd(0), ain,
                        bin, no_bounds(2, -1), no_bounds(2, 1));
  REQUIRE(r.status == QpStatus::ok);
  CHECK(r.x[0] == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(r.lam_in[0] == doctest::Approx(0.0).epsilon(1e-10));

  g << 2, 2;  // unconstrained optimum (-2, -2) violates it; binds at (0.5, 0.5)
  r = solve_qp(h, g, Eigen::MatrixXd(0, 2), Eigen::VectorXd(0), ain, bin,
               no_bounds(2, -1), no_bounds(2, 1));
  REQUIRE(r.status == QpStatus::ok);
  CHECK(r.x[0] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(r.x[1] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(r.lam_in[0] > 0.0);
  const Eigen::VectorXd grad = h * r.x + g - ain.transpose() * r.lam_in;
  CHECK(grad.norm() < 1e-8);
}

TEST_CASE("infeasible constraints are reported") {
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(1, 1);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(1);
  Eigen::MatrixXd ain(1, 1);
  ain << 1;
  Eigen::VectorXd bin(1);
  bin << 5;  // x >= 5 against ub = 1
  Eigen::VectorXd lb(1), ub(1);
  lb << -1;
  ub << 1;
  const QpResult r = solve_qp(h, g, Eigen::MatrixXd(0, 1), Eigen::VectorXd(0),
                              ain, bin, lb, ub);
  CHECK(r.status == QpStatus::infeasible);
  CHECK(r.max_violation > 1e-7);
}

TEST_CASE("random qps match projected brute force") {
  // Rectangular box problems have a closed form: per-coordinate clipping when
  // H is diagonal. Random diagonal H, random box, random linear term.
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(4));
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd g(n), lb(n), ub(n);
    for (int i = 0; i < n; ++i) {
      h(i, i) = rng.uniform(0.5, 3.0);
      g[i] = rng.uniform(-5.0, 5.0);
      lb[i] = rng.uniform(-2.0, 0.0);
      ub[i] = rng.uniform(0.1, 2.0);
    }
    const QpResult r = solve_qp(h, g, Eigen::MatrixXd(0, n), Eigen::VectorXd(0),
                                Eigen::MatrixXd(0, n), Eigen::VectorXd(0), lb, ub);
    REQUIRE(r.status == QpStatus::ok);
    for (int i = 0; i < n; ++i) {
      const double free = -g[i] / h(i, i);
      const double expect = std::min(ub[i], std::max(lb[i], free));
      CHECK(r.x[i] == doctest::Approx(expect).epsilon(1e-8));
    }
  }
}

TEST_CASE("warm started active set still solves correctly") {
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(2, 2);
  Eigen::VectorXd g(2);
  g << 2, 2;
  Eigen::MatrixXd ain(1, 2);
  ain << 1, 1;
  Eigen::VectorXd bin(1);
  bin << 1;
  const QpResult cold = solve_qp(h, g, Eigen::MatrixXd(0, 2), Eigen::VectorXd(0),
                                 ain, bin, no_bounds(2, -1), no_bounds(2, 1));
  REQUIRE(cold.status == QpStatus::ok);
  const QpResult warm = solve_qp(h, g, Eigen::MatrixXd(0, 2), Eigen::VectorXd(0),
                                 ain, bin, no_bounds(2, -1), no_bounds(2, 1),
                                 cold.active);
  REQUIRE(warm.status == QpStatus::ok);
  CHECK(warm.x[0] == doctest::Approx(cold.x[0]).epsilon(1e-12));
  CHECK(warm.iterations <= cold.iterations);

  // A wrong warm set must not change the answer.
  const QpResult wrong = solve_qp(h, -g, Eigen::MatrixXd(0, 2), Eigen::VectorXd(0),
                                  ain, bin, no_bounds(2, -1), no_bounds(2, 1),
                                  cold.active);
  REQUIRE(wrong.status == QpStatus::ok);
  CHECK(wrong.x[0] == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("degenerate duplicated rows terminate") {
  // Two identical inequality rows: naive add/drop loops can cycle here.
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(2, 2);
  Eigen::VectorXd g(2);
  g << 2, 2;
  Eigen::MatrixXd ain(2, 2);
  ain << 1, 1, 1, 1;
  Eigen::VectorXd bin(2);
  bin << 1, 1;
  const QpResult r = solve_qp(h, g, Eigen::MatrixXd(0, 2), Eigen::VectorXd(0),
                              ain, bin, no_bounds(2, -1), no_bounds(2, 1));
  REQUIRE(r.status == QpStatus::ok);
  CHECK(r.x[0] == doctest::Approx(0.5).epsilon(1e-8));
}

TEST_CASE("equalities combined with bounds") {
  // min 1/2||x||^2 s.t. x0 + x1 + x2 = 3, x2 <= 0.5: mass shifts to x0, x1.
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(3, 3);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(3);
  Eigen::MatrixXd aeq(1, 3);
  aeq << 1, 1, 1;
  Eigen::VectorXd beq(1);
  beq << 3;
  Eigen::VectorXd lb = no_bounds(3, -1);
  Eigen::VectorXd ub = no_bounds(3, 1);
  ub[2] = 0.5;
  const QpResult r = solve_qp(h, g, aeq, beq, Eigen::MatrixXd(0, 3),
                              Eigen::VectorXd(0), lb, ub);
  REQUIRE(r.status == QpStatus::ok);
  CHECK(r.x[2] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(r.x[0] == doctest::Approx(1.25).epsilon(1e-9));
  CHECK(r.x[1] == doctest::Approx(1.25).epsilon(1e-9));
}
