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

#include "lsmpc/smpc.hpp"
#include "lsmpc/stats.hpp"

using namespace lsmpc;

namespace {

// Residual with a smooth state-dependent mean and variance; the Jacobian is
// exact so transcription derivative checks are meaningful.
FunctionResidualModel smooth_model() {
  return FunctionResidualModel(
      [](const Eigen::Vector2d& s) {
        ResidualPrediction p;
        p.mean[0] = 0.5 * std::sin(0.01 * s[0]);
        p.mean[1] = 0.3 * std::cos(0.02 * s[1]);
        p.variance[0] = 0.05 + 1e-4 * (s[0] - 1000.0) * (s[0] - 1000.0) / 100.0;
        p.variance[1] = 0.02 + 1e-4 * (s[1] - 100.0) * (s[1] - 100.0) / 100.0;
        return p;
      },
      [](const Eigen::Vector2d& s) {
        Eigen::Matrix2d j = Eigen::Matrix2d::Zero();
        j(0, 0) = 0.005 * std::cos(0.01 * s[0]);
        j(1, 1) = -0.006 * std::sin(0.02 * s[1]);
        return j;
      });
}

FunctionResidualModel deterministic_model() {
  return FunctionResidualModel(
      [](const Eigen::Vector2d& s) {
        ResidualPrediction p;
        p.mean[0] = 0.4 * std::sin(0.01 * s[0]);
        p.mean[1] = -0.2 * std::cos(0.015 * s[1]);
        return p;  // variance identically zero
      },
      [](const Eigen::Vector2d& s) {
        Eigen::Matrix2d j = Eigen::Matrix2d::Zero();
        j(0, 0) = 0.004 * std::cos(0.01 * s[0]);
        j(1, 1) = 0.003 * std::sin(0.015 * s[1]);
        return j;
      });
}

Eigen::Matrix2d random_psd(Rng& rng, double scale) {
  Eigen::Matrix2d b;
  b << rng.normal(), rng.normal(), rng.normal(), rng.normal();
  return scale * b * b.transpose();
}

}  // namespace

TEST_CASE("psd projection") {
  Eigen::Matrix2d psd;
  psd << 2.0, 0.5, 0.5, 1.0;
  CHECK((psd_project(psd) - psd).norm() < 1e-12);

  // Indefinite input: negative eigenvalue clipped, projection idempotent.
  Eigen::Matrix2d indef;
  indef << 1.0, 2.0, 2.0, 1.0;  // eigenvalues 3 and -1
  const Eigen::Matrix2d proj = psd_project(indef);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(proj);
  CHECK(es.eigenvalues().minCoeff() >= -1e-14);
  CHECK((proj - proj.transpose()).norm() < 1e-14);
  CHECK((psd_project(proj) - proj).norm() < 1e-12);

  // Asymmetric input is symmetrized first.
  Eigen::Matrix2d asym;
  asym << 1.0, 0.4, 0.0, 1.0;
  const Eigen::Matrix2d s = psd_project(asym);
  CHECK(s(0, 1) == doctest::Approx(s(1, 0)));
  CHECK(s(0, 1) == doctest::Approx(0.2));
}

TEST_CASE("covariance step scalar value") {
  Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
  a(0, 0) = 0.9;
  a(1, 1) = 0.5;
  Eigen::Matrix2d sigma = Eigen::Matrix2d::Zero();
  sigma(0, 0) = 0.04;
  sigma(1, 1) = 0.09;
  const Eigen::Matrix2d next =
      propagate_cov(sigma, a, Eigen::Matrix2d::Zero(), Eigen::Vector2d(0.01, 0.02));
  CHECK(next(0, 0) == doctest::Approx(0.81 * 0.04 + 0.01).epsilon(1e-12));
  CHECK(next(1, 1) == doctest::Approx(0.25 * 0.09 + 0.02).epsilon(1e-12));
  CHECK(next(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("covariance chains stay positive semidefinite") {
  Rng rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    Eigen::Matrix2d sigma = random_psd(rng, 0.1);
    for (int k = 0; k < 5; ++k) {
      Eigen::Matrix2d a, d;
      a << rng.normal(), rng.normal(), rng.normal(), rng.normal();
      d << rng.normal(), rng.normal(), rng.normal(), rng.normal();
      d *= 0.3;
      const Eigen::Vector2d var(rng.uniform(0.0, 0.5), rng.uniform(0.0, 0.5));
      sigma = propagate_cov(sigma, a, d, var);
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(sigma);
      REQUIRE(es.eigenvalues().minCoeff() >= -1e-12);
      REQUIRE((sigma - sigma.transpose()).norm() < 1e-12);
    }
  }
}

TEST_CASE("joint covariance factorization matches the recursion") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Matrix2d sigma = random_psd(rng, 0.2);
    Eigen::Matrix2d a, d;
    a << rng.normal(), rng.normal(), rng.normal(), rng.normal();
    d << rng.normal(), rng.normal(), rng.normal(), rng.normal();
    d *= 0.2;
    const Eigen::Vector2d var(rng.uniform(0.01, 0.4), rng.uniform(0.01, 0.4));
    const Eigen::Vector2d b(rng.normal(), rng.normal());

    Eigen::Matrix2d sigma_d = Eigen::Matrix2d::Zero();
    sigma_d(0, 0) = var[0];
    sigma_d(1, 1) = var[1];
    const JointCov joint = build_joint_cov(sigma, sigma_d, d);
    const Eigen::MatrixXd big = joint.assemble();
    REQUIRE(big.rows() == 5);
    CHECK((big - big.transpose()).norm() < 1e-12);
    CHECK(big.row(2).norm() == 0.0);  // deterministic input row
    CHECK(big.col(2).norm() == 0.0);

    // [A b I] Sigma_joint [A b I]' is the un-projected covariance step.
    Eigen::MatrixXd m(2, 5);
    m.block<2, 2>(0, 0) = a;
    m.col(2) = b;
    m.block<2, 2>(0, 3) = Eigen::Matrix2d::Identity();
    const Eigen::Matrix2d via_joint = m * big * m.transpose();
    Eigen::Matrix2d direct = a * sigma * a.transpose() +
                             a * sigma * d.transpose() +
                             d * sigma * a.transpose();
    direct(0, 0) += var[0];
    direct(1, 1) += var[1];
    CHECK((via_joint - direct).norm() < 1e-9);
    CHECK((propagate_cov(sigma, a, d, var) - psd_project(direct)).norm() < 1e-12);
  }
}

TEST_CASE("chance constraint tightening") {
  CHECK(tighten_lower(10.0, 4.0, 2.0) == doctest::Approx(14.0));
  CHECK(tighten_upper(10.0, 4.0, 2.0) == doctest::Approx(6.0));
  CHECK(tighten_lower(10.0, 4.0, 0.0) == doctest::Approx(10.0));
  CHECK_THROWS_AS(tighten_lower(0.0, -1e-9, 2.0), std::invalid_argument);
  CHECK_THROWS_AS(tighten_upper(0.0, -1e-9, 2.0), std::invalid_argument);

  ChanceSpec spec;
  spec.probability = 0.99;
  CHECK(spec.quantile() == doctest::Approx(2.3263478740408408).epsilon(1e-12));
  spec.probability = 0.5;
  CHECK(spec.quantile() == 0.0);  // the median back-off vanishes exactly
  spec.probability = 0.4;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec.probability = 1.0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

TEST_CASE("belief propagation through the hybrid model") {
  const PlantParams plant;
  const auto model = smooth_model();
  const double dt = 0.125, s_f = 5500.0;
  const Eigen::Vector2d noise = process_noise_variance(plant, dt);
  CHECK(noise[0] == doctest::Approx(0.125));

  BeliefState b;
  b.mean = Eigen::Vector2d(1000.0, 120.0);
  const BeliefState b1 = propagate_belief(b, 0.7, model, plant, s_f, dt, noise);
  const State nominal = step_nominal(State::from(b.mean), 0.7, s_f, plant, dt);
  const auto pred = model.predict(b.mean);
  CHECK(b1.mean[0] == doctest::Approx(nominal.biomass + pred.mean[0]).epsilon(1e-12));
  CHECK(b1.mean[1] == doctest::Approx(nominal.substrate + pred.mean[1]).epsilon(1e-12));
  // From a zero covariance the successor covariance is the diagonal of the
  // total disturbance variance.
  CHECK(b1.cov(0, 0) == doctest::Approx(pred.variance[0] + noise[0]).epsilon(1e-12));
  CHECK(b1.cov(1, 1) == doctest::Approx(pred.variance[1] + noise[1]).epsilon(1e-12));
  CHECK(b1.cov(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("transcribed covariances equal the standalone recursion") {
  const PlantParams plant;
  const auto model = smooth_model();
  SmpcConfig cfg;
  cfg.base.horizon = 8;
  cfg.base.band.reset();
  const State x0{1000.0, 120.0};
  const double s_f = 5500.0;
  const Eigen::Vector2d noise = process_noise_variance(plant, cfg.base.dt);

  // Exact hybrid rollout so the decision-vector states equal the belief means.
  const OcpLayout lay{cfg.base.horizon};
  Eigen::VectorXd z(lay.vars());
  BeliefState belief;
  belief.mean = x0.vec();
  std::vector<Eigen::Matrix2d> manual{belief.cov};
  const double inputs[8] = {0.7, 0.72, 0.68, 0.7, 0.74, 0.71, 0.69, 0.7};
  for (int k = 0; k < 8; ++k) {
    z[lay.input_index(k)] = inputs[k];
    belief = propagate_belief(belief, inputs[k], model, plant, s_f, cfg.base.dt, noise);
    z[lay.state_index(k + 1)] = belief.mean[0];
    z[lay.state_index(k + 1) + 1] = belief.mean[1];
    manual.push_back(belief.cov);
  }

  const auto sigma = socp_covariances(cfg, plant, model, x0, s_f, z);
  REQUIRE(sigma.size() == 9);
  CHECK(sigma[0].norm() == 0.0);
  for (int k = 0; k <= 8; ++k) {
    CHECK((sigma[k] - manual[k]).norm() < 1e-9);
  }
  // Uncertainty accumulates along this rollout.
  for (int k = 1; k <= 8; ++k) {
    CHECK(sigma[k].trace() > 0.0);
    CHECK(sigma[k].trace() >= sigma[k - 1].trace() - 1e-12);
  }
}

TEST_CASE("stochastic transcription derivatives match finite differences") {
  const PlantParams plant;
  const auto model = smooth_model();
  SmpcConfig cfg;
  cfg.base.horizon = 6;
  const double t_now = 29.8;  // some stages carry band rows
  const State x0{1000.0, 110.0};
  NlpProblem p = transcribe_socp(cfg, plant, model, x0, cfg.base.u_ref, 5500.0, t_now);
  CHECK(p.m_eq == 12);
  // Two nonnegativity rows per stage plus two band rows per active stage.
  CHECK(p.m_in > 12);

  const OcpLayout lay{cfg.base.horizon};
  Eigen::VectorXd z(lay.vars());
  State x = x0;
  for (int k = 0; k < 6; ++k) {
    const double u = 0.7 + 0.01 * k;
    z[lay.input_index(k)] = u;
    const State nominal = step_nominal(x, u, 5500.0, plant, cfg.base.dt);
    const auto pred = model.predict(x.vec());
    x = State{nominal.biomass + pred.mean[0], nominal.substrate + pred.mean[1]};
    z[lay.state_index(k + 1)] = x.biomass * 1.002;  // slightly off the rollout
    z[lay.state_index(k + 1) + 1] = x.substrate * 0.998;
  }
  const FdCheckReport report = finite_diff_check(p, z);
  CHECK(report.objective_gradient_error < 1e-4);
  CHECK(report.eq_jacobian_error < 1e-4);
  CHECK(report.in_jacobian_error < 1e-4);
}

TEST_CASE("median chance level reduces to the nominal controller") {
  PlantParams plant;
  plant.sigma_w = Eigen::Vector2d::Zero();  // no process noise
  const auto model = deterministic_model();

  MpcConfig base;
  base.horizon = 16;
  base.band = SurvivalBand{};
  SmpcConfig scfg;
  scfg.base = base;
  scfg.chance.probability = 0.5;

  StochasticMpc stochastic(scfg, plant, model);
  NominalMpc nominal(base, plant, &model);

  // Approach the band activation so both box and band constraints matter.
  State x{1046.28, 101.615};
  double t = 27.0;
  for (int k = 0; k < 32; ++k) {
    const auto rs = stochastic.step(x, t, 5500.0);
    const auto rn = nominal.step(x, t, 5500.0);
    REQUIRE(!rs.fallback);
    REQUIRE(!rn.fallback);
    CHECK(rs.input == doctest::Approx(rn.input).epsilon(1e-5));
    // With zero total variance every covariance vanishes.
    CHECK(rs.covariances.back().norm() == 0.0);
    const State next = step_nominal(x, rs.input, 5500.0, plant, base.dt);
    const auto pred = model.predict(x.vec());
    x = State{next.biomass + pred.mean[0], next.substrate + pred.mean[1]};
    t += base.dt;
  }
}

TEST_CASE("step result reports the band and its tightened version") {
  const PlantParams plant;
  const auto model = smooth_model();
  SmpcConfig cfg;
  cfg.base.horizon = 12;
  StochasticMpc controller(cfg, plant, model);
  const SurvivalBand& band = *cfg.base.band;

  // Well before activation: nothing reported.
  auto r = controller.step(State{1046.28, 101.615}, 10.0, 5500.0);
  CHECK(std::isnan(r.band_lower));
  CHECK(std::isnan(r.tight_lower));

  // Just before activation the stage-1 constraint is already active.
  controller.reset();
  r = controller.step(State{1046.28, 101.615}, 29.9375, 5500.0);
  CHECK(std::isnan(r.band_lower));
  CHECK(!std::isnan(r.tight_lower));

  // Past activation both are reported and the tightening is strict.
  controller.reset();
  r = controller.step(State{1040.0, 101.615}, 40.0, 5500.0);
  REQUIRE(!std::isnan(r.band_lower));
  REQUIRE(!std::isnan(r.tight_lower));
  const double t1 = 40.0 + cfg.base.dt;
  CHECK(r.band_lower == doctest::Approx(band.lower(40.0)));
  CHECK(r.band_upper == doctest::Approx(band.upper(40.0)));
  CHECK(r.tight_lower > band.lower(t1));
  CHECK(r.tight_upper < band.upper(t1));
  CHECK(r.tight_lower < r.tight_upper);
  REQUIRE(r.covariances.size() == 13);
  const double var1 = r.covariances[1](0, 0);
  const double zp = cfg.chance.quantile();
  CHECK(r.tight_lower ==
        doctest::Approx(band.lower(t1) + zp * std::sqrt(var1)).epsilon(1e-9));
}

TEST_CASE("stochastic config defaults and validation") {
  SmpcConfig cfg;
  CHECK(cfg.base.horizon == 32);
  CHECK(cfg.base.band.has_value());
  CHECK(cfg.chance.probability == doctest::Approx(0.99));
  CHECK_NOTHROW(cfg.validate());
  cfg.chance.probability = 0.3;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
