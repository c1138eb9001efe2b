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
// Contract shared by every learned residual model. The controllers only ever
// see this interface, so GP and probabilistic-network models are drop-in
// replacements for each other.

#ifndef LSMPC_MODEL_INTERFACE_HPP_
#define LSMPC_MODEL_INTERFACE_HPP_

#include <Eigen/Dense>
#include <functional>
#include <string>

namespace lsmpc {

// One-step residual prediction in raw units (mg/L): the correction added to
// the nominal discrete model, per state channel, with its variance.
struct ResidualPrediction {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Vector2d variance = Eigen::Vector2d::Zero();
};

class ResidualModel {
 public:
  virtual ~ResidualModel() = default;

  // state = (biomass, substrate) in raw units; those two states are the only
  // features the residual depends on.
  virtual ResidualPrediction predict(const Eigen::Vector2d& state) const = 0;

  // d mean_i / d state_j in raw units, 2x2.
  virtual Eigen::Matrix2d mean_jacobian(const Eigen::Vector2d& state) const = 0;

  virtual std::string kind() const = 0;
};

// Residual that is identically zero; turns a hybrid controller back into the
// purely nominal one.
class ZeroResidualModel final : public ResidualModel {
 public:
  ResidualPrediction predict(const Eigen::Vector2d&) const override { return {}; }
  Eigen::Matrix2d mean_jacobian(const Eigen::Vector2d&) const override {
    return Eigen::Matrix2d::Zero();
  }
  std::string kind() const override { return "zero"; }
};

// Wraps arbitrary callables; used by tests to inject residual oracles.
class FunctionResidualModel final : public ResidualModel {
 public:
  using PredictFn = std::function<ResidualPrediction(const Eigen::Vector2d&)>;
  using JacobianFn = std::function<Eigen::Matrix2d(const Eigen::Vector2d&)>;

  FunctionResidualModel(PredictFn predict, JacobianFn jacobian, std::string kind = "function")
      : predict_(std::move(predict)), jacobian_(std::move(jacobian)), kind_(std::move(kind)) {}

  ResidualPrediction predict(const Eigen::Vector2d& x) const override { return predict_(x); }
  Eigen::Matrix2d mean_jacobian(const Eigen::Vector2d& x) const override { return jacobian_(x); }
  std::string kind() const override { return kind_; }

 private:
  PredictFn predict_;
  JacobianFn jacobian_;
  std::string kind_;
};

}  // namespace lsmpc

#endif  // LSMPC_MODEL_INTERFACE_HPP_
