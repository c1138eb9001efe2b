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
// Probabilistic feedforward network trained by assumed-density filtering:
// every weight keeps a Gaussian belief, moments are matched through each
// layer, and one pass per observation refines the beliefs in closed form.

#ifndef LSMPC_BNN_HPP_
#define LSMPC_BNN_HPP_

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lsmpc/model_interface.hpp"
#include "lsmpc/scaling.hpp"
#include "lsmpc/stats.hpp"

namespace lsmpc {

struct GaussianBelief {
  double mean = 0.0;
  double var = 1.0;
};

struct GammaBelief {
  double alpha = 1.0;
  double beta = 1.0;

  double mean() const { return alpha / beta; }
  // Mean of the implied inverse precision; only defined for alpha > 1.
  double mean_inverse() const;
};

struct RectifiedMoments {
  double mean = 0.0;
  double variance = 0.0;
};

// Mean and variance of max(z, 0) for z ~ N(mean, variance).
RectifiedMoments relu_moments(double mean, double variance);

// Moment-matched refinement of a Gaussian belief given the derivatives of the
// log normalizer of (belief times likelihood). Returns false and leaves the
// belief untouched when the update would produce a nonpositive variance.
bool adf_refine(GaussianBelief& belief, double dlogz_dmean, double dlogz_dvar);

// Moment-matched refinement of a Gamma belief. The three inputs are the log
// normalizers evaluated with the belief's alpha raised by 0, 1 and 2.
bool gamma_refine(GammaBelief& belief, double logz0, double logz1, double logz2);

struct LayerBelief {
  Eigen::MatrixXd weight_mean, weight_var;  // rows = outputs, cols = inputs
  Eigen::VectorXd bias_mean, bias_var;
};

struct PbpOptions {
  std::vector<int> layer_sizes{2, 50, 1};
  int epochs = 10;
  uint64_t seed = 3;
  GammaBelief weight_prior{6.0, 6.0};  // precision prior shared by all weights
  GammaBelief noise_prior{6.0, 6.0};   // observation precision prior
};

class BnnModel {
 public:
  BnnModel(const std::vector<int>& layer_sizes, const GammaBelief& weight_prior,
           const GammaBelief& noise_prior, Rng& rng);
  BnnModel(std::vector<int> layer_sizes, std::vector<LayerBelief> layers,
           GammaBelief weight_belief, GammaBelief noise_belief);

  struct Moments {
    double mean = 0.0;
    double variance = 0.0;
  };

  // Variance of the network output alone.
  Moments forward_moments(const Eigen::VectorXd& x) const;
  // Adds the expected observation noise; throws while the noise belief has no
  // finite mean (alpha <= 1).
  Moments predict(const Eigen::VectorXd& x) const;
  Eigen::VectorXd mean_gradient(const Eigen::VectorXd& x) const;

  void adf_update(const Eigen::VectorXd& x, double y);
  // One refinement of every weight belief against the shared precision prior.
  void incorporate_weight_prior();

  const std::vector<LayerBelief>& layers() const { return layers_; }
  std::vector<LayerBelief>& mutable_layers() { return layers_; }
  const std::vector<int>& layer_sizes() const { return sizes_; }
  const GammaBelief& noise_belief() const { return noise_belief_; }
  const GammaBelief& weight_belief() const { return weight_belief_; }
  long update_count() const { return update_count_; }
  long skip_count() const { return skip_count_; }

  std::string to_json() const;
  static BnnModel from_json(const std::string& text);

 private:
  std::vector<int> sizes_;
  std::vector<LayerBelief> layers_;
  GammaBelief weight_belief_, noise_belief_;
  long update_count_ = 0;
  long skip_count_ = 0;
};

BnnModel train_pbp(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                   const PbpOptions& options);

// Two independent networks over standardized features, one per state channel,
// exposed to the controllers in raw units.
class BnnResidualModel final : public ResidualModel {
 public:
  BnnResidualModel(BnnModel biomass_channel, BnnModel substrate_channel,
                   Scaler feature_scaler, Scaler label_scaler);

  ResidualPrediction predict(const Eigen::Vector2d& state) const override;
  Eigen::Matrix2d mean_jacobian(const Eigen::Vector2d& state) const override;
  std::string kind() const override { return "bnn"; }

  const BnnModel& channel(int i) const;
  const Scaler& feature_scaler() const { return feature_scaler_; }
  const Scaler& label_scaler() const { return label_scaler_; }

  void save(const std::string& path) const;
  static std::unique_ptr<BnnResidualModel> load(const std::string& path);

 private:
  std::vector<BnnModel> channels_;
  Scaler feature_scaler_, label_scaler_;
};

}  // namespace lsmpc

#endif  // LSMPC_BNN_HPP_
