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
// Closed-loop training-data pipeline: noisy episodes driven by the nominal
// controller with jittered references, one-step residual labels against the
// nominal model, pooling, split and standardization.

#ifndef LSMPC_DATAGEN_HPP_
#define LSMPC_DATAGEN_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lsmpc/mpc.hpp"
#include "lsmpc/plant.hpp"
#include "lsmpc/scaling.hpp"

namespace lsmpc {

struct EpisodeParams {
  double t_sim_days = 70.0;
  double ref_jitter = 0.10;  // references scaled by U(1-j, 1+j) per episode
  State x0{0.2, 0.0};
  double s_f_base = 5500.0;
  double s_f_amplitude = 100.0;
};

// One closed-loop sample: state and applied input at time t, the influent
// concentration the controller saw, and the measured successor state.
struct Transition {
  double t = 0.0;
  State x;
  double flow = 0.0;
  double s_f = 0.0;
  State x_next;
};

struct Episode {
  std::vector<Transition> transitions;
  Eigen::Vector2d ref_states = Eigen::Vector2d::Zero();
  double ref_input = 0.0;
  DisturbanceDraw draw;
  int fallback_steps = 0;  // solver failures bridged by hold-last-input
};

// Runs one noisy closed-loop episode under the nominal controller. The seed
// fixes the disturbance frequencies, the reference jitter and the process
// noise; the survival band is not active during data collection.
Episode run_data_episode(const PlantParams& plant, const MpcConfig& mpc,
                         const EpisodeParams& params, std::uint64_t seed);

// Residual the learned models are trained on: measured successor minus the
// nominal model's prediction, raw units.
Eigen::Vector2d residual_label(const Transition& tr, const PlantParams& plant,
                               double dt);

struct AssemblyParams {
  double trim_days = 5.0;    // drop the start-up transient
  int target_points = 2800;  // even subsample size after pooling
  double split_ratio = 0.8;
  std::uint64_t split_seed = 99;
};

struct Dataset {
  // Rows are samples; feature columns (X, S), label columns one per state.
  Eigen::MatrixXd train_features_raw, test_features_raw;
  Eigen::MatrixXd train_labels_raw, test_labels_raw;
  Scaler feature_scaler, label_scaler;  // fitted on the training split only
  Eigen::MatrixXd train_features_std, test_features_std;
  Eigen::MatrixXd train_labels_std, test_labels_std;

  int train_count() const { return static_cast<int>(train_features_raw.rows()); }
  int test_count() const { return static_cast<int>(test_features_raw.rows()); }
};

Dataset assemble_dataset(const std::vector<Episode>& episodes,
                         const PlantParams& plant, double dt,
                         const AssemblyParams& params);

// Greedy subset selection in input order: a point is kept when its euclidean
// distance to every already-kept point is at least threshold. Returns kept
// row indices; the first row is always kept.
std::vector<int> sparsify_greedy(const Eigen::MatrixXd& points, double threshold);

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m, const std::vector<int>& rows);

// train.csv / test.csv (header X,S,label_X,label_S) plus scaler.json.
void save_dataset(const Dataset& dataset, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace lsmpc

#endif  // LSMPC_DATAGEN_HPP_
