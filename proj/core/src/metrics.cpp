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

#include "lsmpc/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include "lsmpc/stats.hpp"

namespace lsmpc {

namespace {
void check_sizes(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const char* who) {
  if (a.size() == 0) throw std::invalid_argument(std::string(who) + ": empty input");
  if (a.size() != b.size()) throw std::invalid_argument(std::string(who) + ": size mismatch");
}
}  // namespace

double rmse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& labels) {
  check_sizes(predictions, labels, "rmse");
  return std::sqrt((predictions - labels).squaredNorm() / static_cast<double>(labels.size()));
}

double nll_gaussian(const Eigen::VectorXd& means, const Eigen::VectorXd& variances,
                    const Eigen::VectorXd& labels) {
  check_sizes(means, labels, "nll_gaussian");
  check_sizes(variances, labels, "nll_gaussian");
  double total = 0.0;
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    const double var = variances[i];
    if (!(var > 0.0)) throw std::invalid_argument("nll_gaussian: variance must be positive");
    const double r = labels[i] - means[i];
    total += 0.5 * std::log(2.0 * M_PI * var) + r * r / (2.0 * var);
  }
  return total / static_cast<double>(labels.size());
}

std::vector<CalibrationPoint> calibration_curve(const Eigen::VectorXd& means,
                                                const Eigen::VectorXd& variances,
                                                const Eigen::VectorXd& labels, int levels) {
  check_sizes(means, labels, "calibration_curve");
  check_sizes(variances, labels, "calibration_curve");
  if (levels < 1) throw std::invalid_argument("calibration_curve: levels must be >= 1");

  const Eigen::Index n = labels.size();
  std::vector<double> cdf(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double var = variances[i];
    if (!(var > 0.0)) throw std::invalid_argument("calibration_curve: variance must be positive");
    cdf[static_cast<std::size_t>(i)] = normal_cdf((labels[i] - means[i]) / std::sqrt(var));
  }

  std::vector<CalibrationPoint> curve(static_cast<std::size_t>(levels));
  for (int k = 0; k < levels; ++k) {
    const double p = static_cast<double>(k + 1) / static_cast<double>(levels + 1);
    int count = 0;
    for (double c : cdf) {
      if (c <= p) ++count;
    }
    curve[static_cast<std::size_t>(k)] = {p, static_cast<double>(count) / static_cast<double>(n)};
  }
  return curve;
}

double miscalibration_area(const std::vector<CalibrationPoint>& curve) {
  if (curve.empty()) throw std::invalid_argument("miscalibration_area: empty curve");
  // Extend to p=0 and p=1 with constant observed values, then trapezoid.
  std::vector<CalibrationPoint> pts;
  pts.reserve(curve.size() + 2);
  pts.push_back({0.0, curve.front().observed});
  pts.insert(pts.end(), curve.begin(), curve.end());
  pts.push_back({1.0, curve.back().observed});

  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double f0 = std::abs(pts[i - 1].observed - pts[i - 1].level);
    const double f1 = std::abs(pts[i].observed - pts[i].level);
    area += 0.5 * (f0 + f1) * (pts[i].level - pts[i - 1].level);
  }
  return area;
}

}  // namespace lsmpc
