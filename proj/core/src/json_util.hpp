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
// Private JSON glue for model and config persistence. Not installed.

#ifndef LSMPC_SRC_JSON_UTIL_HPP_
#define LSMPC_SRC_JSON_UTIL_HPP_

#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <json.hpp>

#include "lsmpc/scaling.hpp"

namespace lsmpc {
namespace jsonutil {

inline nlohmann::json from_vector(const Eigen::VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline Eigen::VectorXd to_vector(const nlohmann::json& j) {
  if (!j.is_array()) throw std::invalid_argument("expected JSON array");
  Eigen::VectorXd v(static_cast<int>(j.size()));
  for (int i = 0; i < v.size(); ++i) v[i] = j.at(i).get<double>();
  return v;
}

// Matrices are stored as nested arrays, one inner array per row.
inline nlohmann::json from_matrix(const Eigen::MatrixXd& m) {
  nlohmann::json out = nlohmann::json::array();
  for (int r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

inline Eigen::MatrixXd to_matrix(const nlohmann::json& j) {
  if (!j.is_array()) throw std::invalid_argument("expected JSON array of rows");
  const int rows = static_cast<int>(j.size());
  if (rows == 0) return Eigen::MatrixXd(0, 0);
  const int cols = static_cast<int>(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const auto& row = j.at(r);
    if (static_cast<int>(row.size()) != cols) {
      throw std::invalid_argument("ragged JSON matrix");
    }
    for (int c = 0; c < cols; ++c) m(r, c) = row.at(c).get<double>();
  }
  return m;
}

inline nlohmann::json from_scaler(const Scaler& s) {
  return {{"mean", from_vector(s.mean())}, {"std", from_vector(s.std())}};
}

inline Scaler to_scaler(const nlohmann::json& j) {
  return Scaler(to_vector(j.at("mean")), to_vector(j.at("std")));
}

inline const nlohmann::json& field(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw std::invalid_argument(std::string("missing JSON field '") + key + "'");
  }
  return *it;
}

}  // namespace jsonutil
}  // namespace lsmpc

#endif  // LSMPC_SRC_JSON_UTIL_HPP_
