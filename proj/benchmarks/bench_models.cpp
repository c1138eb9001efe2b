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
// Microbenchmarks for the per-prediction cost of the two residual models and
// for one full stochastic MPC step. Models are built on synthetic data with
// fixed hyperparameters; the point is the evaluation cost scaling, not fit
// quality.

#include <benchmark/benchmark.h>

#include <Eigen/Dense>
#include <memory>

#include "lsmpc/bnn.hpp"
#include "lsmpc/config.hpp"
#include "lsmpc/gp.hpp"
#include "lsmpc/plant.hpp"
#include "lsmpc/smpc.hpp"
#include "lsmpc/stats.hpp"

namespace {

using namespace lsmpc;

Eigen::MatrixXd synthetic_features(int n, Rng& rng) {
  Eigen::MatrixXd f(n, 2);
  for (int i = 0; i < n; ++i) {
    f(i, 0) = rng.normal();
    f(i, 1) = rng.normal();
  }
  return f;
}

Scaler unit_scaler() {
  return Scaler(Eigen::Vector2d(1000.0, 100.0), Eigen::Vector2d(50.0, 25.0));
}

std::unique_ptr<GpResidualModel> make_gp(int n) {
  Rng rng(11);
  const Eigen::MatrixXd f = synthetic_features(n, rng);
  Eigen::VectorXd yx(n), ys(n);
  for (int i = 0; i < n; ++i) {
    yx[i] = std::sin(f(i, 0)) + 0.1 * rng.normal();
    ys[i] = std::cos(f(i, 1)) + 0.1 * rng.normal();
  }
  GpHyper hyper;
  hyper.length_scales = Eigen::Vector2d(1.0, 1.0);
  hyper.signal_variance = 1.0;
  hyper.noise_variance = 0.1;
  return std::make_unique<GpResidualModel>(GpModel(f, yx, hyper),
                                           GpModel(f, ys, hyper),
                                           unit_scaler(), unit_scaler());
}

std::unique_ptr<BnnResidualModel> make_bnn() {
  Rng rng(12);
  const GammaBelief prior{6.0, 6.0};
  const GammaBelief noise{40.0, 6.0};
  BnnModel biomass({2, 50, 1}, prior, noise, rng);
  BnnModel substrate({2, 50, 1}, prior, noise, rng);
  return std::make_unique<BnnResidualModel>(
      std::move(biomass), std::move(substrate), unit_scaler(), unit_scaler());
}

void bm_gp_predict(benchmark::State& state) {
  const auto model = make_gp(static_cast<int>(state.range(0)));
  const Eigen::Vector2d x(1010.0, 105.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model->predict(x));
  }
}
BENCHMARK(bm_gp_predict)->Arg(25)->Arg(50)->Arg(100)->Arg(200)->Arg(400);

void bm_gp_mean_jacobian(benchmark::State& state) {
  const auto model = make_gp(static_cast<int>(state.range(0)));
  const Eigen::Vector2d x(1010.0, 105.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model->mean_jacobian(x));
  }
}
BENCHMARK(bm_gp_mean_jacobian)->Arg(100)->Arg(400);

void bm_bnn_predict(benchmark::State& state) {
  const auto model = make_bnn();
  const Eigen::Vector2d x(1010.0, 105.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model->predict(x));
  }
}
BENCHMARK(bm_bnn_predict);

void bm_bnn_mean_jacobian(benchmark::State& state) {
  const auto model = make_bnn();
  const Eigen::Vector2d x(1010.0, 105.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model->mean_jacobian(x));
  }
}
BENCHMARK(bm_bnn_mean_jacobian);

void bm_smpc_step(benchmark::State& state) {
  const auto model = make_gp(static_cast<int>(state.range(0)));
  const ExperimentConfig config = ExperimentConfig::defaults();
  StochasticMpc smpc(config.smpc_config(0.99), config.plant, *model);
  const State x = State::from(config.mpc.x_ref);
  for (auto _ : state) {
    smpc.reset();
    benchmark::DoNotOptimize(smpc.step(x, 0.0, config.sim.s_f_base));
  }
}
BENCHMARK(bm_smpc_step)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
