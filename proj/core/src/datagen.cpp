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

#include "lsmpc/datagen.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "json_util.hpp"
#include "lsmpc/csv.hpp"
#include "lsmpc/stats.hpp"

namespace lsmpc {

Episode run_data_episode(const PlantParams& plant, const MpcConfig& mpc,
                         const EpisodeParams& params, std::uint64_t seed) {
  if (!(params.t_sim_days > 0.0)) {
    throw std::invalid_argument("episode length must be positive");
  }
  Rng rng(seed);
  Episode ep;
  ep.draw = DisturbanceDraw::sample(rng);

  MpcConfig cfg = mpc;
  cfg.band.reset();  // the survival band belongs to evaluation, not data runs
  const double lo = 1.0 - params.ref_jitter;
  const double hi = 1.0 + params.ref_jitter;
  cfg.x_ref[0] *= rng.uniform(lo, hi);
  cfg.x_ref[1] *= rng.uniform(lo, hi);
  cfg.u_ref *= rng.uniform(lo, hi);
  ep.ref_states = cfg.x_ref;
  ep.ref_input = cfg.u_ref;

  NominalMpc controller(cfg, plant, nullptr);
  const int steps = static_cast<int>(std::lround(params.t_sim_days / cfg.dt));
  ep.transitions.reserve(steps);
  State x = params.x0;
  for (int k = 0; k < steps; ++k) {
    const double t = k * cfg.dt;
    const double s_f =
        influent_substrate(t, ep.draw, params.s_f_base, params.s_f_amplitude);
    const auto step = controller.step(x, t, s_f);
    if (step.fallback) ++ep.fallback_steps;
    const State x_next = step_true_plant(x, step.input, s_f, plant, cfg.dt, rng);
    ep.transitions.push_back({t, x, step.input, s_f, x_next});
    x = x_next;
  }
  return ep;
}

Eigen::Vector2d residual_label(const Transition& tr, const PlantParams& plant,
                               double dt) {
  const State predicted = step_nominal(tr.x, tr.flow, tr.s_f, plant, dt);
  return tr.x_next.vec() - predicted.vec();
}

Dataset assemble_dataset(const std::vector<Episode>& episodes,
                         const PlantParams& plant, double dt,
                         const AssemblyParams& params) {
  if (!(params.split_ratio > 0.0 && params.split_ratio < 1.0)) {
    throw std::invalid_argument("split ratio must lie in (0,1)");
  }
  std::vector<const Transition*> pool;
  for (const Episode& ep : episodes) {
    for (const Transition& tr : ep.transitions) {
      if (tr.t >= params.trim_days) pool.push_back(&tr);
    }
  }
  const int pooled = static_cast<int>(pool.size());
  if (pooled < 4) throw std::invalid_argument("not enough transitions to assemble a dataset");

  std::vector<const Transition*> chosen;
  if (params.target_points > 0 && pooled > params.target_points) {
    chosen.reserve(params.target_points);
    for (int i = 0; i < params.target_points; ++i) {
      const auto idx = static_cast<int>(
          static_cast<long long>(i) * pooled / params.target_points);
      chosen.push_back(pool[idx]);
    }
  } else {
    chosen = pool;
  }

  const int n = static_cast<int>(chosen.size());
  Eigen::MatrixXd features(n, 2), labels(n, 2);
  for (int i = 0; i < n; ++i) {
    features.row(i) = chosen[i]->x.vec().transpose();
    labels.row(i) = residual_label(*chosen[i], plant, dt).transpose();
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(params.split_seed);
  rng.shuffle(order);
  const int n_train = static_cast<int>(std::floor(params.split_ratio * n));
  if (n_train < 2 || n - n_train < 2) {
    throw std::invalid_argument("split leaves too few samples on one side");
  }

  Dataset ds;
  ds.train_features_raw.resize(n_train, 2);
  ds.train_labels_raw.resize(n_train, 2);
  ds.test_features_raw.resize(n - n_train, 2);
  ds.test_labels_raw.resize(n - n_train, 2);
  for (int i = 0; i < n; ++i) {
    if (i < n_train) {
      ds.train_features_raw.row(i) = features.row(order[i]);
      ds.train_labels_raw.row(i) = labels.row(order[i]);
    } else {
      ds.test_features_raw.row(i - n_train) = features.row(order[i]);
      ds.test_labels_raw.row(i - n_train) = labels.row(order[i]);
    }
  }
  ds.feature_scaler = Scaler::fit(ds.train_features_raw);
  ds.label_scaler = Scaler::fit(ds.train_labels_raw);
  ds.train_features_std = ds.feature_scaler.apply_all(ds.train_features_raw);
  ds.test_features_std = ds.feature_scaler.apply_all(ds.test_features_raw);
  ds.train_labels_std = ds.label_scaler.apply_all(ds.train_labels_raw);
  ds.test_labels_std = ds.label_scaler.apply_all(ds.test_labels_raw);
  return ds;
}

std::vector<int> sparsify_greedy(const Eigen::MatrixXd& points, double threshold) {
  if (!(threshold >= 0.0)) {
    throw std::invalid_argument("sparsification threshold must be nonnegative");
  }
  std::vector<int> kept;
  for (int i = 0; i < points.rows(); ++i) {
    bool keep = true;
    for (int j : kept) {
      if ((points.row(i) - points.row(j)).norm() < threshold) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(i);
  }
  return kept;
}

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m, const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<int>(rows.size()), m.cols());
  for (size_t i = 0; i < rows.size(); ++i) out.row(static_cast<int>(i)) = m.row(rows[i]);
  return out;
}

namespace {

void write_split_csv(const std::string& path, const Eigen::MatrixXd& features,
                     const Eigen::MatrixXd& labels) {
  CsvWriter w(path, {"X", "S", "label_X", "label_S"});
  for (int i = 0; i < features.rows(); ++i) {
    w.begin_row();
    w.add(features(i, 0));
    w.add(features(i, 1));
    w.add(labels(i, 0));
    w.add(labels(i, 1));
    w.end_row();
  }
  w.save();
}

void read_split_csv(const std::string& path, Eigen::MatrixXd& features,
                    Eigen::MatrixXd& labels) {
  const CsvTable table = read_csv(path);
  const int cx = table.column("X");
  const int cs = table.column("S");
  const int clx = table.column("label_X");
  const int cls = table.column("label_S");
  const int n = static_cast<int>(table.rows.size());
  features.resize(n, 2);
  labels.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    features(i, 0) = table.number(i, cx);
    features(i, 1) = table.number(i, cs);
    labels(i, 0) = table.number(i, clx);
    labels(i, 1) = table.number(i, cls);
  }
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::string& dir) {
  write_split_csv(dir + "/train.csv", dataset.train_features_raw,
                  dataset.train_labels_raw);
  write_split_csv(dir + "/test.csv", dataset.test_features_raw,
                  dataset.test_labels_raw);
  nlohmann::json j;
  j["feature_scaler"] = jsonutil::from_scaler(dataset.feature_scaler);
  j["label_scaler"] = jsonutil::from_scaler(dataset.label_scaler);
  write_text_file(dir + "/scaler.json", j.dump(2));
}

Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  read_split_csv(dir + "/train.csv", ds.train_features_raw, ds.train_labels_raw);
  read_split_csv(dir + "/test.csv", ds.test_features_raw, ds.test_labels_raw);
  const nlohmann::json j = nlohmann::json::parse(read_text_file(dir + "/scaler.json"));
  ds.feature_scaler = jsonutil::to_scaler(jsonutil::field(j, "feature_scaler"));
  ds.label_scaler = jsonutil::to_scaler(jsonutil::field(j, "label_scaler"));
  ds.train_features_std = ds.feature_scaler.apply_all(ds.train_features_raw);
  ds.test_features_std = ds.feature_scaler.apply_all(ds.test_features_raw);
  ds.train_labels_std = ds.label_scaler.apply_all(ds.train_labels_raw);
  ds.test_labels_std = ds.label_scaler.apply_all(ds.test_labels_raw);
  return ds;
}

}  // namespace lsmpc
