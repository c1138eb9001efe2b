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

#ifndef LSMPC_GP_HPP_
#define LSMPC_GP_HPP_

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lsmpc/model_interface.hpp"
#include "lsmpc/scaling.hpp"

namespace lsmpc {

// Squared-exponential kernel with one length scale per input dimension and a
// fixed (non-trained) observation noise variance.
struct GpHyper {
  Eigen::VectorXd length_scales;
  double signal_variance = 1.0;
  double noise_variance = 0.1;
};

double kernel_se_ard(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                     const GpHyper& hyper);

// Negative log marginal likelihood of targets under the kernel, including the
// noise term on the diagonal. grad, when non-null, receives the derivative
// with respect to (log ell_1..D, log signal_variance).
double gp_nlml(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
               const GpHyper& hyper, Eigen::VectorXd* grad = nullptr);

struct GpTrainOptions {
  int restarts = 8;          // random restarts beyond the unit-scale start
  int max_iters = 300;
  double log_min = -2.0;     // restart draws are uniform in log space
  double log_max = 2.0;
  uint64_t seed = 7;
};

struct GpTrainReport {
  std::vector<double> initial_nlml;  // one entry per optimizer start
  std::vector<double> final_nlml;
  int best_start = -1;
  double best_nlml = 0.0;
};

// Exact GP regressor on a fixed training set. The predictive variance is the
// latent-function variance; the observation noise is not added back.
class GpModel {
 public:
  GpModel(Eigen::MatrixXd inputs, Eigen::VectorXd targets, GpHyper hyper);

  struct Prediction {
    double mean = 0.0;
    double variance = 0.0;
  };

  Prediction predict(const Eigen::VectorXd& x) const;
  Eigen::VectorXd mean_gradient(const Eigen::VectorXd& x) const;

  double nlml() const { return nlml_; }
  const GpHyper& hyper() const { return hyper_; }
  const Eigen::MatrixXd& inputs() const { return inputs_; }
  const Eigen::VectorXd& targets() const { return targets_; }
  const Eigen::MatrixXd& chol_lower() const { return chol_; }
  const Eigen::VectorXd& alpha() const { return alpha_; }

  std::string to_json() const;
  static GpModel from_json(const std::string& text);

 private:
  Eigen::MatrixXd inputs_;
  Eigen::VectorXd targets_;
  GpHyper hyper_;
  Eigen::MatrixXd chol_;   // lower Cholesky factor of K + noise * I
  Eigen::VectorXd alpha_;  // (K + noise * I)^-1 targets
  double nlml_ = 0.0;
};

GpModel train_gp(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                 double noise_variance, const GpTrainOptions& options = {},
                 GpTrainReport* report = nullptr);

// Two independent single-output GPs over standardized (biomass, substrate)
// features, one per state channel, exposed to the controllers in raw units.
class GpResidualModel final : public ResidualModel {
 public:
  GpResidualModel(GpModel biomass_channel, GpModel substrate_channel,
                  Scaler feature_scaler, Scaler label_scaler);

  ResidualPrediction predict(const Eigen::Vector2d& state) const override;
  Eigen::Matrix2d mean_jacobian(const Eigen::Vector2d& state) const override;
  std::string kind() const override { return "gp"; }

  const GpModel& channel(int i) const;
  const Scaler& feature_scaler() const { return feature_scaler_; }
  const Scaler& label_scaler() const { return label_scaler_; }

  void save(const std::string& path) const;
  static std::unique_ptr<GpResidualModel> load(const std::string& path);

 private:
  std::vector<GpModel> channels_;
  Scaler feature_scaler_, label_scaler_;
};

}  // namespace lsmpc

#endif  // LSMPC_GP_HPP_
