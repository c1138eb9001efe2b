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

#include "lsmpc/scaling.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lsmpc {

Scaler::Scaler(Eigen::VectorXd mean, Eigen::VectorXd std)
    : mean_(std::move(mean)), std_(std::move(std)) {
  if (mean_.size() != std_.size()) {
    throw std::invalid_argument("scaler mean/std size mismatch");
  }
  for (int d = 0; d < std_.size(); ++d) {
    if (!(std_[d] > 0.0)) {
      throw std::invalid_argument("scaler std must be positive in dimension " +
                                  std::to_string(d));
    }
  }
}

Scaler Scaler::fit(const Eigen::MatrixXd& rows) {
  if (rows.rows() < 2) {
    throw std::invalid_argument("scaler fit needs at least two samples");
  }
  const auto n = static_cast<double>(rows.rows());
  Eigen::VectorXd mean = rows.colwise().mean();
  Eigen::VectorXd std(rows.cols());
  for (int d = 0; d < rows.cols(); ++d) {
    const double var = (rows.col(d).array() - mean[d]).square().sum() / n;
    if (!(var > 0.0)) {
      throw std::invalid_argument("zero variance in dimension " +
                                  std::to_string(d) +
                                  "; cannot standardize");
    }
    std[d] = std::sqrt(var);
  }
  return Scaler(std::move(mean), std::move(std));
}

Eigen::VectorXd Scaler::apply(const Eigen::VectorXd& row) const {
  return (row - mean_).cwiseQuotient(std_);
}

Eigen::VectorXd Scaler::invert(const Eigen::VectorXd& row) const {
  return row.cwiseProduct(std_) + mean_;
}

Eigen::MatrixXd Scaler::apply_all(const Eigen::MatrixXd& rows) const {
  Eigen::MatrixXd out = rows;
  out.rowwise() -= mean_.transpose();
  out.array().rowwise() /= std_.transpose().array();
  return out;
}

double Scaler::apply(int dim, double value) const {
  return (value - mean_[dim]) / std_[dim];
}

double Scaler::invert(int dim, double value) const {
  return value * std_[dim] + mean_[dim];
}

}  // namespace lsmpc
