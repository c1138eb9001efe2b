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
// Accuracy and calibration metrics for probabilistic one-step predictors.
// All of these operate on standardized quantities so the two label channels
// are comparable.

#ifndef LSMPC_METRICS_HPP_
#define LSMPC_METRICS_HPP_

#include <Eigen/Dense>
#include <vector>

namespace lsmpc {

// Root mean squared error. Throws std::invalid_argument on size mismatch or
// empty input.
double rmse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& labels);

// Mean Gaussian negative log likelihood:
//   mean over i of  0.5 log(2 pi var_i) + (y_i - mu_i)^2 / (2 var_i).
// Variances must be strictly positive.
double nll_gaussian(const Eigen::VectorXd& means, const Eigen::VectorXd& variances,
                    const Eigen::VectorXd& labels);

struct CalibrationPoint {
  double level = 0.0;     // nominal probability p
  double observed = 0.0;  // fraction of labels with CDF((y-mu)/sigma) <= p
};

// Quantile calibration curve on uniform levels p_i = i/(levels+1), i=1..levels.
// observed(p) is nondecreasing in p by construction.
std::vector<CalibrationPoint> calibration_curve(const Eigen::VectorXd& means,
                                                const Eigen::VectorXd& variances,
                                                const Eigen::VectorXd& labels, int levels = 100);

// Trapezoidal integral of |observed(p) - p| over p in [0,1]; the curve is
// extended to the endpoints by constant continuation of observed. A perfectly
// calibrated model scores 0; any monotone curve scores at most 0.5.
double miscalibration_area(const std::vector<CalibrationPoint>& curve);

}  // namespace lsmpc

#endif  // LSMPC_METRICS_HPP_
