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

#include "lsmpc/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include <json.hpp>

#include "lsmpc/csv.hpp"
#include "lsmpc/smpc.hpp"
#include "lsmpc/stats.hpp"
#include "lsmpc/svg.hpp"

namespace lsmpc {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

class StageTimer {
 public:
  StageTimer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) { fs::create_directories(dir); }

const char* status_name(NlpStatus status) {
  switch (status) {
    case NlpStatus::converged:
      return "converged";
    case NlpStatus::max_iterations:
      return "max_iterations";
    case NlpStatus::line_search_failure:
      return "line_search_failure";
  }
  return "unknown";
}

void write_trajectory_csv(const std::string& path,
                          const std::vector<double>& ts,
                          const std::vector<State>& xs,
                          const std::vector<double>& flows,
                          const std::vector<double>& s_fs) {
  CsvWriter w(path, {"t", "X", "S", "F", "S_f"});
  for (std::size_t i = 0; i < ts.size(); ++i) {
    w.begin_row();
    w.add(ts[i]);
    w.add(xs[i].biomass);
    w.add(xs[i].substrate);
    w.add(flows[i]);
    w.add(s_fs[i]);
    w.end_row();
  }
  w.save();
}

void write_calibration_csv(const std::string& path,
                           const std::vector<CalibrationPoint>& curve) {
  CsvWriter w(path, {"p", "observed"});
  for (const CalibrationPoint& c : curve) {
    w.begin_row();
    w.add(c.level);
    w.add(c.observed);
    w.end_row();
  }
  w.save();
}

ordered_json channel_json(const Eigen::Vector2d& v) {
  return ordered_json{{"X", v[0]}, {"S", v[1]}};
}

}  // namespace

std::string to_string(ModelKind kind) {
  return kind == ModelKind::gp ? "gp" : "bnn";
}

std::string to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::nominal:
      return "nominal";
    case ControllerKind::hybrid:
      return "hybrid";
    case ControllerKind::smpc_gp:
      return "smpc-gp";
    case ControllerKind::smpc_bnn:
      return "smpc-bnn";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "gp") return ModelKind::gp;
  if (name == "bnn") return ModelKind::bnn;
  throw std::invalid_argument("unknown model kind '" + name +
                              "' (expected gp or bnn)");
}

ControllerKind parse_controller_kind(const std::string& name) {
  if (name == "nominal") return ControllerKind::nominal;
  if (name == "hybrid") return ControllerKind::hybrid;
  if (name == "smpc-gp") return ControllerKind::smpc_gp;
  if (name == "smpc-bnn") return ControllerKind::smpc_bnn;
  throw std::invalid_argument(
      "unknown controller '" + name +
      "' (expected nominal, hybrid, smpc-gp or smpc-bnn)");
}

// ---- data generation ----

DataGenResult run_generate_data(const ExperimentConfig& config,
                                const std::string& out_dir,
                                RunManifest* manifest) {
  StageTimer timer;
  ensure_dir(out_dir);
  if (manifest) manifest->begin_stage("generate-data");

  EpisodeParams ep;
  ep.t_sim_days = config.data.t_sim_days;
  ep.ref_jitter = config.data.ref_jitter;
  ep.x0 = config.sim.x0;
  ep.s_f_base = config.sim.s_f_base;
  ep.s_f_amplitude = config.sim.s_f_amplitude;

  const MpcConfig mpc = config.nominal_config(false);

  DataGenResult result;
  for (int i = 0; i < config.data.episodes; ++i) {
    const std::uint64_t seed = Rng::derive(config.data.base_seed, i);
    result.episodes.push_back(run_data_episode(config.plant, mpc, ep, seed));
  }

  for (const Episode& episode : result.episodes) {
    for (const Transition& tr : episode.transitions) {
      if (tr.t >= config.data.trim_days) ++result.pooled_points;
    }
  }

  AssemblyParams ap;
  ap.trim_days = config.data.trim_days;
  ap.target_points = config.data.target_points;
  ap.split_ratio = config.data.split_ratio;
  ap.split_seed = config.data.split_seed;
  result.dataset =
      assemble_dataset(result.episodes, config.plant, mpc.dt, ap);

  save_dataset(result.dataset, out_dir);
  if (manifest) {
    manifest->add_artifact(join(out_dir, "train.csv"));
    manifest->add_artifact(join(out_dir, "test.csv"));
    manifest->add_artifact(join(out_dir, "scaler.json"));
  }

  for (std::size_t i = 0; i < result.episodes.size(); ++i) {
    const Episode& episode = result.episodes[i];
    std::vector<double> ts, flows, s_fs;
    std::vector<State> xs;
    for (const Transition& tr : episode.transitions) {
      ts.push_back(tr.t);
      xs.push_back(tr.x);
      flows.push_back(tr.flow);
      s_fs.push_back(tr.s_f);
    }
    const std::string path =
        join(out_dir, "episode_" + std::to_string(i) + ".csv");
    write_trajectory_csv(path, ts, xs, flows, s_fs);
    if (manifest) manifest->add_artifact(path);
  }

  ordered_json summary;
  summary["episodes"] = config.data.episodes;
  summary["pooled_points"] = result.pooled_points;
  summary["train_points"] = result.dataset.train_count();
  summary["test_points"] = result.dataset.test_count();
  ordered_json fallbacks = ordered_json::array();
  for (const Episode& episode : result.episodes) {
    fallbacks.push_back(episode.fallback_steps);
  }
  summary["fallback_steps"] = fallbacks;
  write_text_file(join(out_dir, "dataset_summary.json"),
                  summary.dump(2) + "\n");
  if (manifest) {
    manifest->add_artifact(join(out_dir, "dataset_summary.json"));
    manifest->end_stage(timer.seconds());
  }
  return result;
}

// ---- model training ----

std::unique_ptr<GpResidualModel> fit_gp_residual(
    const GpSettings& settings, const Eigen::MatrixXd& features_std,
    const Eigen::MatrixXd& labels_std, const Scaler& feature_scaler,
    const Scaler& label_scaler, GpTrainReport* biomass_report,
    GpTrainReport* substrate_report) {
  GpTrainOptions options;
  options.restarts = settings.restarts;
  options.max_iters = settings.max_iters;

  options.seed = Rng::derive(settings.seed, 0);
  GpModel biomass = train_gp(features_std, labels_std.col(0),
                             settings.noise_variance[0], options,
                             biomass_report);
  options.seed = Rng::derive(settings.seed, 1);
  GpModel substrate = train_gp(features_std, labels_std.col(1),
                               settings.noise_variance[1], options,
                               substrate_report);
  return std::make_unique<GpResidualModel>(std::move(biomass),
                                           std::move(substrate),
                                           feature_scaler, label_scaler);
}

std::unique_ptr<BnnResidualModel> fit_bnn_residual(
    const BnnSettings& settings, const Eigen::MatrixXd& features_std,
    const Eigen::MatrixXd& labels_std, const Scaler& feature_scaler,
    const Scaler& label_scaler) {
  PbpOptions options;
  options.layer_sizes = {static_cast<int>(features_std.cols()),
                         settings.hidden_units, 1};
  options.epochs = settings.epochs;
  options.weight_prior =
      GammaBelief{settings.weight_prior_alpha, settings.weight_prior_beta};

  options.seed = Rng::derive(settings.seed, 0);
  options.noise_prior = GammaBelief{settings.noise_prior_alpha[0],
                                    settings.noise_prior_beta[0]};
  BnnModel biomass = train_pbp(features_std, labels_std.col(0), options);

  options.seed = Rng::derive(settings.seed, 1);
  options.noise_prior = GammaBelief{settings.noise_prior_alpha[1],
                                    settings.noise_prior_beta[1]};
  BnnModel substrate = train_pbp(features_std, labels_std.col(1), options);

  return std::make_unique<BnnResidualModel>(std::move(biomass),
                                            std::move(substrate),
                                            feature_scaler, label_scaler);
}

ModelMetrics evaluate_model(const ResidualModel& model, const Dataset& dataset,
                            int calibration_levels,
                            std::vector<CalibrationPoint>* biomass_curve,
                            std::vector<CalibrationPoint>* substrate_curve) {
  const int n = dataset.test_count();
  if (n == 0) throw std::invalid_argument("evaluate_model: empty test split");
  Eigen::MatrixXd means(n, 2), vars(n, 2);
  const Eigen::VectorXd& label_std = dataset.label_scaler.std();
  for (int i = 0; i < n; ++i) {
    const ResidualPrediction p =
        model.predict(dataset.test_features_raw.row(i).transpose());
    for (int ch = 0; ch < 2; ++ch) {
      means(i, ch) = dataset.label_scaler.apply(ch, p.mean[ch]);
      vars(i, ch) = p.variance[ch] / (label_std[ch] * label_std[ch]);
    }
  }

  ModelMetrics metrics;
  std::vector<CalibrationPoint>* curves[2] = {biomass_curve, substrate_curve};
  for (int ch = 0; ch < 2; ++ch) {
    const Eigen::VectorXd mu = means.col(ch);
    const Eigen::VectorXd var = vars.col(ch);
    const Eigen::VectorXd y = dataset.test_labels_std.col(ch);
    metrics.rmse[ch] = rmse(mu, y);
    metrics.nll[ch] = nll_gaussian(mu, var, y);
    const auto curve = calibration_curve(mu, var, y, calibration_levels);
    metrics.miscalibration[ch] = miscalibration_area(curve);
    if (curves[ch]) *curves[ch] = curve;
  }
  return metrics;
}

namespace {

void write_heatmap_csv(const std::string& path, const ResidualModel& model,
                       const Dataset& dataset, int grid) {
  Eigen::Vector2d lo = dataset.train_features_raw.colwise().minCoeff();
  Eigen::Vector2d hi = dataset.train_features_raw.colwise().maxCoeff();
  const Eigen::Vector2d margin = 0.1 * (hi - lo);
  lo -= margin;
  hi += margin;
  lo[0] = std::max(lo[0], 0.0);  // concentrations cannot go negative
  lo[1] = std::max(lo[1], 0.0);

  CsvWriter w(path, {"X", "S", "std_X", "std_S"});
  for (int i = 0; i < grid; ++i) {
    const double x = lo[0] + (hi[0] - lo[0]) * (i + 0.5) / grid;
    for (int j = 0; j < grid; ++j) {
      const double s = lo[1] + (hi[1] - lo[1]) * (j + 0.5) / grid;
      const ResidualPrediction p = model.predict({x, s});
      w.begin_row();
      w.add(x);
      w.add(s);
      w.add(std::sqrt(p.variance[0]));
      w.add(std::sqrt(p.variance[1]));
      w.end_row();
    }
  }
  w.save();
}

}  // namespace

TrainResult run_train(const ExperimentConfig& config, const Dataset& dataset,
                      ModelKind kind, const std::string& out_dir,
                      RunManifest* manifest) {
  StageTimer timer;
  ensure_dir(out_dir);
  const std::string name = to_string(kind);
  if (manifest) manifest->begin_stage("train-" + name);

  TrainResult result;
  ordered_json extra;
  if (kind == ModelKind::gp) {
    const std::vector<int> kept = sparsify_greedy(
        dataset.train_features_std, config.data.sparsify_threshold);
    const Eigen::MatrixXd features =
        select_rows(dataset.train_features_std, kept);
    const Eigen::MatrixXd labels = select_rows(dataset.train_labels_std, kept);
    GpTrainReport rx, rs;
    std::unique_ptr<GpResidualModel> model =
        fit_gp_residual(config.gp, features, labels, dataset.feature_scaler,
                        dataset.label_scaler, &rx, &rs);
    model->save(join(out_dir, "model_gp.json"));
    result.train_points_used = static_cast<int>(kept.size());
    extra["nlml"] = {{"X", rx.best_nlml}, {"S", rs.best_nlml}};
    extra["best_start"] = {{"X", rx.best_start}, {"S", rs.best_start}};
    result.model = std::move(model);
  } else {
    std::unique_ptr<BnnResidualModel> model = fit_bnn_residual(
        config.bnn, dataset.train_features_std, dataset.train_labels_std,
        dataset.feature_scaler, dataset.label_scaler);
    model->save(join(out_dir, "model_bnn.json"));
    result.train_points_used = dataset.train_count();
    extra["update_skip_fraction"] = {
        {"X", static_cast<double>(model->channel(0).skip_count()) /
                  std::max(1L, model->channel(0).update_count())},
        {"S", static_cast<double>(model->channel(1).skip_count()) /
                  std::max(1L, model->channel(1).update_count())}};
    result.model = std::move(model);
  }

  std::vector<CalibrationPoint> curve_x, curve_s;
  result.metrics = evaluate_model(*result.model, dataset,
                                  config.metrics.calibration_levels, &curve_x,
                                  &curve_s);

  const std::string calib_x = join(out_dir, "calibration_" + name + "_X.csv");
  const std::string calib_s = join(out_dir, "calibration_" + name + "_S.csv");
  write_calibration_csv(calib_x, curve_x);
  write_calibration_csv(calib_s, curve_s);

  const std::string heatmap = join(out_dir, "heatmap_" + name + ".csv");
  write_heatmap_csv(heatmap, *result.model, dataset,
                    config.metrics.heatmap_grid);

  ordered_json mj;
  mj["kind"] = name;
  mj["standardized"] = true;
  mj["train_points_used"] = result.train_points_used;
  mj["test_points"] = dataset.test_count();
  mj["rmse"] = channel_json(result.metrics.rmse);
  mj["nll"] = channel_json(result.metrics.nll);
  mj["miscalibration_area"] = channel_json(result.metrics.miscalibration);
  mj["training"] = extra;
  const std::string metrics_path = join(out_dir, "metrics_" + name + ".json");
  write_text_file(metrics_path, mj.dump(2) + "\n");

  if (manifest) {
    manifest->add_artifact(join(out_dir, "model_" + name + ".json"));
    manifest->add_artifact(metrics_path);
    manifest->add_artifact(calib_x);
    manifest->add_artifact(calib_s);
    manifest->add_artifact(heatmap);
    manifest->end_stage(timer.seconds());
  }
  return result;
}

// ---- open-loop comparison ----

namespace {

// Rolls one predictive model open loop under a fixed input profile. The
// stepper maps (state, flow, s_f) to the next state mean.
template <class Stepper>
std::vector<State> roll_model(Stepper step, const State& x0, int steps,
                              double dt, double step_time, double flow_before,
                              double flow_after, double s_f) {
  std::vector<State> xs;
  xs.reserve(steps + 1);
  State x = x0;
  xs.push_back(x);
  for (int k = 0; k < steps; ++k) {
    const double t = k * dt;
    const double flow = t < step_time ? flow_before : flow_after;
    x = step(x, flow, s_f);
    xs.push_back(x);
  }
  return xs;
}

Eigen::Vector2d window_error(const std::vector<State>& truth,
                             const std::vector<State>& model, double dt,
                             double window_days) {
  const int n = static_cast<int>(truth.size());
  const int first = std::max(0, n - 1 - static_cast<int>(std::lround(
                                            window_days / dt)));
  Eigen::Vector2d err = Eigen::Vector2d::Zero();
  int count = 0;
  for (int i = first; i < n; ++i) {
    err[0] += std::abs(model[i].biomass - truth[i].biomass);
    err[1] += std::abs(model[i].substrate - truth[i].substrate);
    ++count;
  }
  return err / count;
}

}  // namespace

OpenLoopResult run_open_loop(const ExperimentConfig& config,
                             const ResidualModel& gp_model,
                             const ResidualModel& bnn_model,
                             const std::string& out_dir,
                             RunManifest* manifest) {
  StageTimer timer;
  ensure_dir(out_dir);
  if (manifest) manifest->begin_stage("open-loop");

  const OpenLoopSettings& ol = config.open_loop;
  const double dt = config.mpc.dt;
  const int steps = static_cast<int>(std::lround(ol.t_total_days / dt));
  const State x0 = State::from(config.mpc.x_ref);
  const double s_f = config.sim.s_f_base;
  const PlantParams& plant = config.plant;

  const auto truth = roll_model(
      [&](const State& x, double flow, double sf) {
        return step_true_noisefree(x, flow, sf, plant, dt);
      },
      x0, steps, dt, ol.step_time, ol.flow_before, ol.flow_after, s_f);
  const auto nominal = roll_model(
      [&](const State& x, double flow, double sf) {
        return step_nominal(x, flow, sf, plant, dt);
      },
      x0, steps, dt, ol.step_time, ol.flow_before, ol.flow_after, s_f);
  const auto gp = roll_model(
      [&](const State& x, double flow, double sf) {
        return hybrid_step(x, flow, sf, gp_model, plant, dt).mean;
      },
      x0, steps, dt, ol.step_time, ol.flow_before, ol.flow_after, s_f);
  const auto bnn = roll_model(
      [&](const State& x, double flow, double sf) {
        return hybrid_step(x, flow, sf, bnn_model, plant, dt).mean;
      },
      x0, steps, dt, ol.step_time, ol.flow_before, ol.flow_after, s_f);

  std::vector<double> ts, flows, s_fs;
  for (int k = 0; k <= steps; ++k) {
    const double t = k * dt;
    ts.push_back(t);
    flows.push_back(t < ol.step_time ? ol.flow_before : ol.flow_after);
    s_fs.push_back(s_f);
  }

  const std::vector<std::pair<std::string, const std::vector<State>*>> rolls{
      {"open_loop_true.csv", &truth},
      {"open_loop_nominal.csv", &nominal},
      {"open_loop_gp.csv", &gp},
      {"open_loop_bnn.csv", &bnn}};
  for (const auto& [name, traj] : rolls) {
    const std::string path = join(out_dir, name);
    write_trajectory_csv(path, ts, *traj, flows, s_fs);
    if (manifest) manifest->add_artifact(path);
  }

  OpenLoopResult result;
  result.nominal_error = window_error(truth, nominal, dt, ol.window_days);
  result.gp_error = window_error(truth, gp, dt, ol.window_days);
  result.bnn_error = window_error(truth, bnn, dt, ol.window_days);

  ordered_json summary;
  summary["steady_state_error"] = {{"nominal", channel_json(result.nominal_error)},
                                   {"gp", channel_json(result.gp_error)},
                                   {"bnn", channel_json(result.bnn_error)}};
  summary["substrate_improvement"] = {
      {"gp", result.nominal_error[1] / std::max(result.gp_error[1], 1e-12)},
      {"bnn", result.nominal_error[1] / std::max(result.bnn_error[1], 1e-12)}};
  const std::string summary_path = join(out_dir, "open_loop_summary.json");
  write_text_file(summary_path, summary.dump(2) + "\n");
  if (manifest) {
    manifest->add_artifact(summary_path);
    manifest->end_stage(timer.seconds());
  }
  return result;
}

// ---- closed-loop survival-band study ----

int ClosedLoopResult::total_post_steps() const {
  int total = 0;
  for (const SeedStats& s : per_seed) total += s.post_steps;
  return total;
}

int ClosedLoopResult::total_violations() const {
  int total = 0;
  for (const SeedStats& s : per_seed) total += s.violations;
  return total;
}

double ClosedLoopResult::violation_fraction() const {
  const int post = total_post_steps();
  return post == 0 ? 0.0 : static_cast<double>(total_violations()) / post;
}

namespace {

struct LoopStep {
  double input = 0.0;
  bool fallback = false;
  NlpStatus status = NlpStatus::converged;
  double solve_seconds = 0.0;
  double band_lower = 0.0, band_upper = 0.0;
  double tight_lower = 0.0, tight_upper = 0.0;
};

}  // namespace

ClosedLoopResult run_closed_loop(const ExperimentConfig& config,
                                 ControllerKind controller,
                                 const ResidualModel* model,
                                 const std::string& out_dir,
                                 RunManifest* manifest) {
  StageTimer timer;
  ensure_dir(out_dir);
  const std::string name = to_string(controller);
  if (controller != ControllerKind::nominal && model == nullptr) {
    throw std::invalid_argument("run_closed_loop: controller '" + name +
                                "' needs a residual model");
  }
  if (manifest) manifest->begin_stage("closed-loop-" + name);

  const double dt = config.mpc.dt;
  const int steps =
      static_cast<int>(std::lround(config.closed_loop.t_sim_days / dt));
  const SurvivalBand& band = config.band;
  const bool stochastic = controller != ControllerKind::nominal;
  // The non-stochastic hybrid controller is the p = 0.5 edge case: the
  // back-off vanishes and only the mean model differs from nominal MPC.
  const double chance = controller == ControllerKind::hybrid
                            ? 0.5
                            : config.smpc.chance.probability;

  ClosedLoopResult result;
  result.controller = controller;

  ordered_json seeds_json = ordered_json::array();
  for (const std::uint64_t seed : config.closed_loop.seeds) {
    Rng rng(seed);
    const DisturbanceDraw draw = DisturbanceDraw::sample(rng);
    State x = State::from(config.mpc.x_ref);

    NominalMpc nominal_mpc(config.nominal_config(true), config.plant);
    std::unique_ptr<StochasticMpc> smpc;
    if (stochastic) {
      smpc = std::make_unique<StochasticMpc>(config.smpc_config(chance),
                                             config.plant, *model);
    }

    SeedStats stats;
    stats.seed = seed;
    stats.steps = steps;

    std::unique_ptr<CsvWriter> log;
    const std::string log_path =
        join(out_dir, "closed_loop_" + name + "_seed" + std::to_string(seed) +
                          ".csv");
    if (stochastic) {
      log = std::make_unique<CsvWriter>(
          log_path,
          std::vector<std::string>{"t", "X", "S", "F", "lb", "ub", "tight_lb",
                                   "tight_ub", "solve_ms", "status",
                                   "model_kind"});
    } else {
      log = std::make_unique<CsvWriter>(
          log_path,
          std::vector<std::string>{"t", "X", "S", "F", "solve_ms", "status"});
    }

    for (int k = 0; k < steps; ++k) {
      const double t = k * dt;
      const double s_f = influent_substrate(t, draw, config.sim.s_f_base,
                                            config.sim.s_f_amplitude);
      LoopStep step;
      if (stochastic) {
        const StochasticMpc::StepResult r = smpc->step(x, t, s_f);
        step = LoopStep{r.input,      r.fallback,    r.nlp.status,
                        r.solve_seconds, r.band_lower, r.band_upper,
                        r.tight_lower,   r.tight_upper};
      } else {
        const NominalMpc::StepResult r = nominal_mpc.step(x, t, s_f);
        step.input = r.input;
        step.fallback = r.fallback;
        step.status = r.nlp.status;
        step.solve_seconds = r.solve_seconds;
      }
      if (step.fallback) ++stats.fallbacks;

      if (band.active(t)) {
        ++stats.post_steps;
        const double lb = band.lower(t);
        const double ub = band.upper(t);
        const double depth = std::max(lb - x.biomass, x.biomass - ub);
        if (depth > 1e-9) {
          ++stats.violations;
          stats.max_depth = std::max(stats.max_depth, depth);
        }
      }

      log->begin_row();
      log->add(t);
      log->add(x.biomass);
      log->add(x.substrate);
      log->add(step.input);
      if (stochastic) {
        log->add(step.band_lower);
        log->add(step.band_upper);
        log->add(step.tight_lower);
        log->add(step.tight_upper);
      }
      log->add(step.solve_seconds * 1e3);
      log->add(std::string(step.fallback ? "fallback"
                                         : status_name(step.status)));
      if (stochastic) log->add(model->kind());
      log->end_row();

      x = step_true_plant(x, step.input, s_f, config.plant, dt, rng);
    }
    log->save();
    if (manifest) manifest->add_artifact(log_path, /*deterministic=*/false);

    result.per_seed.push_back(stats);
    seeds_json.push_back(ordered_json{{"seed", stats.seed},
                                      {"steps", stats.steps},
                                      {"post_steps", stats.post_steps},
                                      {"violations", stats.violations},
                                      {"max_depth", stats.max_depth},
                                      {"fallbacks", stats.fallbacks}});
  }

  ordered_json summary;
  summary["controller"] = name;
  summary["model"] = model ? model->kind() : "none";
  summary["chance_probability"] = stochastic ? chance : 0.5;
  summary["per_seed"] = seeds_json;
  summary["total_post_steps"] = result.total_post_steps();
  summary["total_violations"] = result.total_violations();
  summary["violation_fraction"] = result.violation_fraction();
  const std::string summary_path =
      join(out_dir, "violations_" + name + ".json");
  write_text_file(summary_path, summary.dump(2) + "\n");
  if (manifest) {
    manifest->add_artifact(summary_path);
    manifest->end_stage(timer.seconds());
  }
  return result;
}

// ---- solve-time benchmark ----

namespace {

// One stochastic MPC episode without noise seeds varying: the trajectory is a
// pure function of the model, so repeats differ only in wall time.
struct EpisodeTiming {
  double solver_seconds = 0.0;
  long sqp_iterations = 0;
  int fallbacks = 0;
  int steps = 0;
};

EpisodeTiming run_benchmark_episode(const ExperimentConfig& config,
                                    const ResidualModel& model,
                                    std::uint64_t seed) {
  const double dt = config.mpc.dt;
  const int steps =
      static_cast<int>(std::lround(config.benchmark.episode_days / dt));
  StochasticMpc smpc(config.smpc_config(config.smpc.chance.probability),
                     config.plant, model);
  Rng rng(seed);
  const DisturbanceDraw draw = DisturbanceDraw::sample(rng);
  State x = State::from(config.mpc.x_ref);

  EpisodeTiming timing;
  timing.steps = steps;
  for (int k = 0; k < steps; ++k) {
    const double t = k * dt;
    const double s_f = influent_substrate(t, draw, config.sim.s_f_base,
                                          config.sim.s_f_amplitude);
    const StochasticMpc::StepResult r = smpc.step(x, t, s_f);
    timing.solver_seconds += r.solve_seconds;
    timing.sqp_iterations += r.nlp.iterations;
    if (r.fallback) ++timing.fallbacks;
    x = step_true_plant(x, r.input, s_f, config.plant, dt, rng);
  }
  return timing;
}

std::vector<int> even_subsample(int available, int wanted) {
  if (wanted > available) {
    throw std::invalid_argument(
        "benchmark: requested GP size exceeds the training split");
  }
  std::vector<int> idx(wanted);
  for (int i = 0; i < wanted; ++i) idx[i] = i * available / wanted;
  return idx;
}

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2]
                    : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

BenchmarkResult run_benchmark(const ExperimentConfig& config,
                              const Dataset& dataset,
                              const std::string& out_dir,
                              RunManifest* manifest) {
  StageTimer timer;
  ensure_dir(out_dir);
  if (manifest) manifest->begin_stage("benchmark-timing");

  BenchmarkResult result;
  result.gp_sizes = config.benchmark.gp_sizes;

  CsvWriter results_csv(
      join(out_dir, "benchmark_results.csv"),
      {"model", "size", "steps", "sqp_iterations", "fallbacks"});
  CsvWriter times_csv(join(out_dir, "benchmark_times.csv"),
                      {"model", "size", "train_seconds",
                       "solver_seconds_median", "per_step_ms"});

  for (const int size : config.benchmark.gp_sizes) {
    const std::vector<int> idx =
        even_subsample(dataset.train_count(), size);
    const Eigen::MatrixXd features =
        select_rows(dataset.train_features_std, idx);
    const Eigen::MatrixXd labels = select_rows(dataset.train_labels_std, idx);

    StageTimer train_timer;
    const std::unique_ptr<GpResidualModel> model =
        fit_gp_residual(config.gp, features, labels, dataset.feature_scaler,
                        dataset.label_scaler);
    const double train_seconds = train_timer.seconds();

    std::vector<double> totals;
    EpisodeTiming last;
    for (int r = 0; r < config.benchmark.repeats; ++r) {
      last = run_benchmark_episode(config, *model, config.benchmark.seed);
      totals.push_back(last.solver_seconds);
    }
    const double total = median(totals);
    result.gp_total_seconds.push_back(total);
    result.gp_points_kept.push_back(size);
    result.steps_per_episode = last.steps;

    results_csv.begin_row();
    results_csv.add(std::string("gp"));
    results_csv.add(static_cast<double>(size));
    results_csv.add(static_cast<double>(last.steps));
    results_csv.add(static_cast<double>(last.sqp_iterations));
    results_csv.add(static_cast<double>(last.fallbacks));
    results_csv.end_row();

    times_csv.begin_row();
    times_csv.add(std::string("gp"));
    times_csv.add(static_cast<double>(size));
    times_csv.add(train_seconds);
    times_csv.add(total);
    times_csv.add(1e3 * total / last.steps);
    times_csv.end_row();
  }

  // Fixed-cost network baseline on the full training split.
  StageTimer bnn_train_timer;
  const std::unique_ptr<BnnResidualModel> bnn = fit_bnn_residual(
      config.bnn, dataset.train_features_std, dataset.train_labels_std,
      dataset.feature_scaler, dataset.label_scaler);
  const double bnn_train_seconds = bnn_train_timer.seconds();

  std::vector<double> bnn_totals;
  EpisodeTiming bnn_last;
  for (int r = 0; r < config.benchmark.repeats; ++r) {
    bnn_last = run_benchmark_episode(config, *bnn, config.benchmark.seed);
    bnn_totals.push_back(bnn_last.solver_seconds);
  }
  result.bnn_total_seconds = median(bnn_totals);

  results_csv.begin_row();
  results_csv.add(std::string("bnn"));
  results_csv.add(static_cast<double>(dataset.train_count()));
  results_csv.add(static_cast<double>(bnn_last.steps));
  results_csv.add(static_cast<double>(bnn_last.sqp_iterations));
  results_csv.add(static_cast<double>(bnn_last.fallbacks));
  results_csv.end_row();

  times_csv.begin_row();
  times_csv.add(std::string("bnn"));
  times_csv.add(static_cast<double>(dataset.train_count()));
  times_csv.add(bnn_train_seconds);
  times_csv.add(result.bnn_total_seconds);
  times_csv.add(1e3 * result.bnn_total_seconds / bnn_last.steps);
  times_csv.end_row();

  for (std::size_t i = 0; i < result.gp_sizes.size(); ++i) {
    if (result.gp_total_seconds[i] > result.bnn_total_seconds) {
      result.crossover_size = result.gp_sizes[i];
      break;
    }
  }

  results_csv.save();
  times_csv.save();

  const double bnn_spread =
      *std::max_element(bnn_totals.begin(), bnn_totals.end()) /
      std::max(*std::min_element(bnn_totals.begin(), bnn_totals.end()), 1e-12);

  ordered_json summary;
  summary["gp_sizes"] = result.gp_sizes;
  summary["gp_solver_seconds"] = result.gp_total_seconds;
  summary["bnn_solver_seconds"] = result.bnn_total_seconds;
  summary["steps_per_episode"] = result.steps_per_episode;
  summary["crossover_size"] = result.crossover_size;
  summary["bnn_repeat_spread"] = bnn_spread;
  bool increasing = true;
  for (std::size_t i = 1; i < result.gp_total_seconds.size(); ++i) {
    increasing =
        increasing && result.gp_total_seconds[i] > result.gp_total_seconds[i - 1];
  }
  summary["gp_strictly_increasing"] = increasing;
  const std::string summary_path = join(out_dir, "benchmark_summary.json");
  write_text_file(summary_path, summary.dump(2) + "\n");

  if (manifest) {
    manifest->add_artifact(join(out_dir, "benchmark_results.csv"));
    manifest->add_artifact(join(out_dir, "benchmark_times.csv"),
                           /*deterministic=*/false);
    manifest->add_artifact(summary_path, /*deterministic=*/false);
    manifest->end_stage(timer.seconds());
  }
  return result;
}

// ---- plots ----

namespace {

bool exists(const std::string& path) { return fs::exists(fs::path(path)); }

std::vector<double> numbers(const CsvTable& table, const std::string& name) {
  const int col = table.column(name);
  std::vector<double> out;
  out.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    out.push_back(table.number(static_cast<int>(i), col));
  }
  return out;
}

void plot_open_loop(const std::string& out_dir,
                    std::vector<std::string>& figures) {
  const std::vector<std::pair<std::string, std::string>> rolls{
      {"true", "#000000"},
      {"nominal", "#d62728"},
      {"gp", "#1f77b4"},
      {"bnn", "#2ca02c"}};
  struct Roll {
    std::string label, color;
    CsvTable table;
  };
  std::vector<Roll> loaded;
  for (const auto& [label, color] : rolls) {
    const std::string path = join(out_dir, "open_loop_" + label + ".csv");
    if (!exists(path)) return;
    loaded.push_back(Roll{label, color, read_csv(path)});
  }
  const std::vector<std::pair<std::string, std::string>> channels{
      {"S", "substrate mg/L"}, {"X", "biomass mg/L"}};
  for (const auto& [column, label] : channels) {
    SvgPlot plot(640, 400, "open loop flow step, " + column);
    plot.set_axis_labels("t, d", label);
    for (const Roll& roll : loaded) {
      plot.add_line(numbers(roll.table, "t"), numbers(roll.table, column),
                    roll.color, 1.5, roll.label);
    }
    const std::string out =
        join(out_dir, column == "S" ? "open_loop_substrate.svg"
                                    : "open_loop_biomass.svg");
    plot.save(out);
    figures.push_back(out);
  }
}

void plot_calibration(const std::string& out_dir,
                      std::vector<std::string>& figures) {
  const std::vector<std::tuple<std::string, std::string, std::string>> curves{
      {"calibration_gp_X.csv", "gp X", "#1f77b4"},
      {"calibration_gp_S.csv", "gp S", "#17becf"},
      {"calibration_bnn_X.csv", "bnn X", "#2ca02c"},
      {"calibration_bnn_S.csv", "bnn S", "#bcbd22"}};
  SvgPlot plot(480, 440, "calibration");
  plot.set_axis_labels("nominal p", "observed");
  plot.set_x_range(0, 1);
  plot.set_y_range(0, 1);
  plot.add_line({0.0, 1.0}, {0.0, 1.0}, "#888888", 1.0, "ideal");
  bool any = false;
  for (const auto& [file, label, color] : curves) {
    const std::string path = join(out_dir, file);
    if (!exists(path)) continue;
    const CsvTable table = read_csv(path);
    plot.add_line(numbers(table, "p"), numbers(table, "observed"), color, 1.5,
                  label);
    any = true;
  }
  if (!any) return;
  const std::string out = join(out_dir, "calibration.svg");
  plot.save(out);
  figures.push_back(out);
}

void plot_heatmaps(const std::string& out_dir,
                   std::vector<std::string>& figures) {
  for (const std::string kind : {"gp", "bnn"}) {
    const std::string path = join(out_dir, "heatmap_" + kind + ".csv");
    if (!exists(path)) continue;
    const CsvTable table = read_csv(path);
    const std::vector<double> xs = numbers(table, "X");
    const std::vector<double> ss = numbers(table, "S");

    std::vector<double> train_x, train_s;
    const std::string train_path = join(out_dir, "train.csv");
    if (exists(train_path)) {
      const CsvTable train = read_csv(train_path);
      train_x = numbers(train, "X");
      train_s = numbers(train, "S");
    }

    for (const std::string channel : {"std_X", "std_S"}) {
      const std::vector<double> vals = numbers(table, channel);
      const double lo = *std::min_element(vals.begin(), vals.end());
      const double hi = *std::max_element(vals.begin(), vals.end());
      // Cell sizes from the distinct sorted grid coordinates.
      auto spacing = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
        return v.size() > 1 ? v[1] - v[0] : 1.0;
      };
      const double wx = spacing(xs);
      const double ws = spacing(ss);
      SvgPlot plot(520, 460, "predictive std " + kind + " " + channel);
      plot.set_axis_labels("X, mg/L", "S, mg/L");
      for (std::size_t i = 0; i < vals.size(); ++i) {
        const double norm =
            hi > lo ? (vals[i] - lo) / (hi - lo) : 0.5;
        plot.add_cell(xs[i], ss[i], wx, ws, norm);
      }
      if (!train_x.empty()) {
        plot.add_points(train_x, train_s, "#000000", 1.2, "train");
      }
      const std::string out =
          join(out_dir, "heatmap_" + kind + "_" + channel + ".svg");
      plot.save(out);
      figures.push_back(out);
    }
  }
}

void plot_closed_loop(const ExperimentConfig& config,
                      const std::string& out_dir,
                      std::vector<std::string>& figures) {
  for (const std::string name :
       {"nominal", "hybrid", "smpc-gp", "smpc-bnn"}) {
    // First seed in config order that has a log on disk.
    std::string path;
    for (const std::uint64_t seed : config.closed_loop.seeds) {
      const std::string candidate =
          join(out_dir,
               "closed_loop_" + name + "_seed" + std::to_string(seed) +
                   ".csv");
      if (exists(candidate)) {
        path = candidate;
        break;
      }
    }
    if (path.empty()) continue;
    const CsvTable table = read_csv(path);
    const std::vector<double> ts = numbers(table, "t");
    SvgPlot plot(640, 400, "closed loop " + name);
    plot.set_axis_labels("t, d", "biomass mg/L");
    plot.add_line(ts, numbers(table, "X"), "#1f77b4", 1.5, "X");
    // Band edges recomputed from the config so nominal logs get them too.
    std::vector<double> lb, ub;
    for (const double t : ts) {
      if (config.band.active(t)) {
        lb.push_back(config.band.lower(t));
        ub.push_back(config.band.upper(t));
      } else {
        lb.push_back(std::numeric_limits<double>::quiet_NaN());
        ub.push_back(std::numeric_limits<double>::quiet_NaN());
      }
    }
    plot.add_line(ts, lb, "#d62728", 1.0, "band");
    plot.add_line(ts, ub, "#d62728", 1.0);
    bool has_tight = false;
    for (const std::string& h : table.header) {
      if (h == "tight_lb") has_tight = true;
    }
    if (has_tight) {
      plot.add_line(ts, numbers(table, "tight_lb"), "#ff7f0e", 1.0,
                    "tightened");
      plot.add_line(ts, numbers(table, "tight_ub"), "#ff7f0e", 1.0);
    }
    const std::string out = join(out_dir, "closed_loop_" + name + ".svg");
    plot.save(out);
    figures.push_back(out);
  }
}

void plot_benchmark(const std::string& out_dir,
                    std::vector<std::string>& figures) {
  const std::string path = join(out_dir, "benchmark_times.csv");
  if (!exists(path)) return;
  const CsvTable table = read_csv(path);
  const int model_col = table.column("model");
  const int size_col = table.column("size");
  const int total_col = table.column("solver_seconds_median");
  std::vector<double> gp_sizes, gp_totals;
  double bnn_total = -1;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const int row = static_cast<int>(i);
    if (table.rows[i][model_col] == "gp") {
      gp_sizes.push_back(table.number(row, size_col));
      gp_totals.push_back(table.number(row, total_col));
    } else {
      bnn_total = table.number(row, total_col);
    }
  }
  if (gp_sizes.empty()) return;
  SvgPlot plot(520, 380, "solver time per episode");
  plot.set_axis_labels("GP training points", "total solver s");
  plot.add_line(gp_sizes, gp_totals, "#1f77b4", 1.5, "gp");
  plot.add_points(gp_sizes, gp_totals, "#1f77b4", 3.0);
  if (bnn_total > 0) {
    plot.add_line({gp_sizes.front(), gp_sizes.back()},
                  {bnn_total, bnn_total}, "#2ca02c", 1.5, "bnn");
  }
  const std::string out = join(out_dir, "benchmark_times.svg");
  plot.save(out);
  figures.push_back(out);
}

}  // namespace

std::vector<std::string> render_plots(const ExperimentConfig& config,
                                      const std::string& out_dir,
                                      RunManifest* manifest) {
  StageTimer timer;
  if (manifest) manifest->begin_stage("plot");
  std::vector<std::string> figures;
  plot_open_loop(out_dir, figures);
  plot_calibration(out_dir, figures);
  plot_heatmaps(out_dir, figures);
  plot_closed_loop(config, out_dir, figures);
  plot_benchmark(out_dir, figures);
  if (figures.empty()) {
    throw std::runtime_error("render_plots: no known result CSVs in " +
                             out_dir);
  }
  if (manifest) {
    for (const std::string& f : figures) manifest->add_artifact(f);
    manifest->end_stage(timer.seconds());
  }
  return figures;
}

}  // namespace lsmpc
