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
// One experiment configuration for the whole pipeline. Defaults reproduce the
// headline study; a JSON file can override any field. Unknown keys are
// rejected so typos fail loudly instead of silently running the defaults.

#ifndef LSMPC_CONFIG_HPP_
#define LSMPC_CONFIG_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "lsmpc/mpc.hpp"
#include "lsmpc/plant.hpp"
#include "lsmpc/smpc.hpp"

namespace lsmpc {

struct SimSettings {
  State x0{0.2, 0.0};
  double s_f_base = 5500.0;
  double s_f_amplitude = 100.0;
};

struct DataSettings {
  int episodes = 6;
  double t_sim_days = 70.0;
  double trim_days = 5.0;
  int target_points = 2800;
  double split_ratio = 0.8;
  double ref_jitter = 0.10;
  double sparsify_threshold = 0.2;  // standardized feature units
  std::uint64_t base_seed = 1234;   // per-episode seeds derived from this
  std::uint64_t split_seed = 99;
};

struct GpSettings {
  Eigen::Vector2d noise_variance{0.1, 0.01};  // fixed, standardized units
  int restarts = 8;
  int max_iters = 300;
  std::uint64_t seed = 7;
};

struct BnnSettings {
  int hidden_units = 50;
  int epochs = 10;
  double weight_prior_alpha = 6.0;
  double weight_prior_beta = 6.0;
  Eigen::Vector2d noise_prior_alpha{40.0, 6.0};  // per output channel
  Eigen::Vector2d noise_prior_beta{40.0, 6.0};
  std::uint64_t seed = 3;
};

struct OpenLoopSettings {
  double t_total_days = 40.0;
  double step_time = 5.0;       // flow step instant, d
  double flow_before = 0.714286;
  double flow_after = 0.75;
  double window_days = 5.0;     // steady-state error averaging window
};

struct ClosedLoopSettings {
  double t_sim_days = 70.0;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
};

struct BenchmarkSettings {
  std::vector<int> gp_sizes{25, 50, 100, 200, 400};
  double episode_days = 10.0;
  int repeats = 3;
  std::uint64_t seed = 5;
};

struct MetricsSettings {
  int calibration_levels = 100;
  int heatmap_grid = 40;  // cells per axis in the predictive-std map
};

struct ExperimentConfig {
  PlantParams plant;
  SimSettings sim;
  MpcConfig mpc;    // nominal controller; band unset here, attached per study
  SmpcConfig smpc;  // stochastic controller; shares weights and refs with mpc
  SurvivalBand band;
  DataSettings data;
  GpSettings gp;
  BnnSettings bnn;
  OpenLoopSettings open_loop;
  ClosedLoopSettings closed_loop;
  BenchmarkSettings benchmark;
  MetricsSettings metrics;

  static ExperimentConfig defaults();
  // Parse JSON text with defaults for anything not mentioned. Throws
  // std::runtime_error naming the first unknown key or ill-typed value.
  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig load(const std::string& path);

  // Canonical serialization: fixed key order, so equal configs give equal
  // bytes and hash() is stable.
  std::string to_json() const;
  std::uint64_t hash() const;

  void validate() const;

  // Controller configs assembled for a given study.
  MpcConfig nominal_config(bool with_band) const;
  SmpcConfig smpc_config(double chance_probability) const;
};

}  // namespace lsmpc

#endif  // LSMPC_CONFIG_HPP_
