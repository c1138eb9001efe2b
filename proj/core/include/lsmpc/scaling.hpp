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

#ifndef LSMPC_SCALING_HPP_
#define LSMPC_SCALING_HPP_

#include <Eigen/Dense>

namespace lsmpc {

// Per-dimension zero-mean / unit-std transform. Fitted with the population
// (1/N) variance. Matrices are samples-by-dimensions.
class Scaler {
 public:
  Scaler() = default;
  Scaler(Eigen::VectorXd mean, Eigen::VectorXd std);

  // Throws std::invalid_argument when a dimension has zero variance; the
  // message names the offending dimension.
  static Scaler fit(const Eigen::MatrixXd& rows);

  Eigen::VectorXd apply(const Eigen::VectorXd& row) const;
  Eigen::VectorXd invert(const Eigen::VectorXd& row) const;
  Eigen::MatrixXd apply_all(const Eigen::MatrixXd& rows) const;
  double apply(int dim, double value) const;
  double invert(int dim, double value) const;

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& std() const { return std_; }
  int dims() const { return static_cast<int>(mean_.size()); }

 private:
  Eigen::VectorXd mean_, std_;
};

}  // namespace lsmpc

#endif  // LSMPC_SCALING_HPP_
