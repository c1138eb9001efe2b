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
// The study pipeline: data generation, model training and evaluation, the
// open-loop comparison, the closed-loop survival-band study, the solve-time
// benchmark, and plot rendering. Every runner writes its artifacts under an
// output directory and registers them in the manifest when one is given.

#ifndef LSMPC_EXPERIMENTS_HPP_
#define LSMPC_EXPERIMENTS_HPP_

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lsmpc/bnn.hpp"
#include "lsmpc/config.hpp"
#include "lsmpc/datagen.hpp"
#include "lsmpc/gp.hpp"
#include "lsmpc/manifest.hpp"
#include "lsmpc/metrics.hpp"
#include "lsmpc/model_interface.hpp"

namespace lsmpc {

enum class ModelKind { gp, bnn };
enum class ControllerKind { nominal, hybrid, smpc_gp, smpc_bnn };

std::string to_string(ModelKind kind);
std::string to_string(ControllerKind kind);
ModelKind parse_model_kind(const std::string& name);        // throws on junk
ControllerKind parse_controller_kind(const std::string& name);

// ---- data generation ----

struct DataGenResult {
  Dataset dataset;
  std::vector<Episode> episodes;
  int pooled_points = 0;  // rows available after trimming, before subsampling
};

// Runs the configured number of noisy closed-loop episodes, assembles and
// splits the dataset, and writes train/test CSVs, the scaler JSON, one
// trajectory CSV per episode and a summary JSON into out_dir.
DataGenResult run_generate_data(const ExperimentConfig& config,
                                const std::string& out_dir,
                                RunManifest* manifest = nullptr);

// ---- model training ----

// All metric values are in standardized label units, one entry per state
// channel (biomass, substrate).
struct ModelMetrics {
  Eigen::Vector2d rmse = Eigen::Vector2d::Zero();
  Eigen::Vector2d nll = Eigen::Vector2d::Zero();
  Eigen::Vector2d miscalibration = Eigen::Vector2d::Zero();
};

// Trains both channels of the sparse-subset GP residual model. Reports, when
// non-null, receive the optimizer traces of the two channels.
std::unique_ptr<GpResidualModel> fit_gp_residual(
    const GpSettings& settings, const Eigen::MatrixXd& features_std,
    const Eigen::MatrixXd& labels_std, const Scaler& feature_scaler,
    const Scaler& label_scaler, GpTrainReport* biomass_report = nullptr,
    GpTrainReport* substrate_report = nullptr);

std::unique_ptr<BnnResidualModel> fit_bnn_residual(
    const BnnSettings& settings, const Eigen::MatrixXd& features_std,
    const Eigen::MatrixXd& labels_std, const Scaler& feature_scaler,
    const Scaler& label_scaler);

// Test-set metrics in standardized units; curves, when non-null, receive the
// per-channel calibration curves.
ModelMetrics evaluate_model(const ResidualModel& model, const Dataset& dataset,
                            int calibration_levels,
                            std::vector<CalibrationPoint>* biomass_curve = nullptr,
                            std::vector<CalibrationPoint>* substrate_curve = nullptr);

struct TrainResult {
  std::unique_ptr<ResidualModel> model;
  ModelMetrics metrics;
  int train_points_used = 0;  // sparse subset for the GP, full split for the BNN
};

// Trains one model kind on the dataset and writes the model JSON, a metrics
// JSON, per-channel calibration CSVs and a predictive-std heat map CSV.
TrainResult run_train(const ExperimentConfig& config, const Dataset& dataset,
                      ModelKind kind, const std::string& out_dir,
                      RunManifest* manifest = nullptr);

// ---- open-loop comparison ----

struct OpenLoopResult {
  // Mean absolute deviation from the true trajectory over the final window,
  // per state channel; one entry per model (nominal, gp, bnn).
  Eigen::Vector2d nominal_error = Eigen::Vector2d::Zero();
  Eigen::Vector2d gp_error = Eigen::Vector2d::Zero();
  Eigen::Vector2d bnn_error = Eigen::Vector2d::Zero();
};

// Rolls the true plant and the three predictive models through the same flow
// step experiment and writes one trajectory CSV per roll plus a summary JSON.
OpenLoopResult run_open_loop(const ExperimentConfig& config,
                             const ResidualModel& gp_model,
                             const ResidualModel& bnn_model,
                             const std::string& out_dir,
                             RunManifest* manifest = nullptr);

// ---- closed-loop survival-band study ----

struct SeedStats {
  std::uint64_t seed = 0;
  int steps = 0;
  int post_steps = 0;   // steps with the band active
  int violations = 0;   // band-active steps with biomass outside the corridor
  double max_depth = 0.0;  // worst violation distance, mg/L
  int fallbacks = 0;
};

struct ClosedLoopResult {
  ControllerKind controller = ControllerKind::nominal;
  std::vector<SeedStats> per_seed;

  int total_post_steps() const;
  int total_violations() const;
  double violation_fraction() const;  // 0 when no post-activation steps
};

// Runs the configured seeds from the reference state with the survival band
// activating mid-episode. model may be null only for the nominal controller.
// Writes one step log per seed and a violation summary JSON.
ClosedLoopResult run_closed_loop(const ExperimentConfig& config,
                                 ControllerKind controller,
                                 const ResidualModel* model,
                                 const std::string& out_dir,
                                 RunManifest* manifest = nullptr);

// ---- solve-time benchmark ----

struct BenchmarkResult {
  std::vector<int> gp_sizes;
  std::vector<double> gp_total_seconds;   // median over repeats, per size
  std::vector<int> gp_points_kept;        // training points per size (= size)
  double bnn_total_seconds = 0.0;
  int steps_per_episode = 0;
  // Smallest GP size whose total solver time exceeds the fixed-cost network
  // baseline; -1 when the GP stays cheaper everywhere.
  int crossover_size = -1;
};

// Trains GPs of increasing size on subsets of the training split, runs the
// same stochastic MPC episode with each and with the network baseline, and
// records total solver wall time (median over repeats). Writes a deterministic
// results CSV, a timing CSV and a summary JSON.
BenchmarkResult run_benchmark(const ExperimentConfig& config,
                              const Dataset& dataset,
                              const std::string& out_dir,
                              RunManifest* manifest = nullptr);

// ---- plots ----

// Renders SVG figures from the CSVs present in out_dir; artifacts that are
// missing are skipped. Returns the list of figures written; throws when no
// known input exists at all.
std::vector<std::string> render_plots(const ExperimentConfig& config,
                                      const std::string& out_dir,
                                      RunManifest* manifest = nullptr);

}  // namespace lsmpc

#endif  // LSMPC_EXPERIMENTS_HPP_
