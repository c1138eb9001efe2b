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
// Stochastic MPC over the hybrid model. The mean trajectory is transcribed
// multiple-shooting like the nominal controller; the state covariance is
// recomputed by forward recursion inside every constraint evaluation
// (single-shooting in the covariance). State bounds and the survival band are
// tightened around the mean by z_p predicted standard deviations, and the
// expected quadratic cost adds covariance trace terms.

#ifndef LSMPC_SMPC_HPP_
#define LSMPC_SMPC_HPP_

#include <vector>

#include <Eigen/Dense>

#include "lsmpc/model_interface.hpp"
#include "lsmpc/mpc.hpp"
#include "lsmpc/nlp.hpp"
#include "lsmpc/plant.hpp"

namespace lsmpc {

// Gaussian state summary propagated over the horizon.
struct BeliefState {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
};

// Joint covariance over (state, input, residual) with deterministic inputs:
// the input row and column are identically zero.
struct JointCov {
  Eigen::Matrix2d sigma_x = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d sigma_d = Eigen::Matrix2d::Zero();  // model variance + process noise
  Eigen::Matrix2d cross_xd = Eigen::Matrix2d::Zero(); // sigma_x * (d mean jacobian)^T

  Eigen::MatrixXd assemble() const;  // symmetric 5x5 in (x, u, d) order
};

JointCov build_joint_cov(const Eigen::Matrix2d& sigma_x,
                         const Eigen::Matrix2d& sigma_d_total,
                         const Eigen::Matrix2d& mean_jacobian);

// Symmetrize and clip negative eigenvalues at zero.
Eigen::Matrix2d psd_project(const Eigen::Matrix2d& m);

// One covariance step: A sigma A' + A sigma D' + D sigma A' + diag(var_total),
// symmetrized and PSD-projected. Equals [A B I] * joint * [A B I]' with the
// joint blocks above; kept as one shared routine so the controller and the
// standalone propagation agree bit for bit.
Eigen::Matrix2d propagate_cov(const Eigen::Matrix2d& sigma, const Eigen::Matrix2d& a,
                              const Eigen::Matrix2d& d_jacobian,
                              const Eigen::Vector2d& var_total);

// Full belief step through the hybrid model: mean via nominal step plus
// residual mean, covariance via propagate_cov with the model variance at the
// mean plus the discrete process noise.
BeliefState propagate_belief(const BeliefState& belief, double input,
                             const ResidualModel& model, const PlantParams& plant,
                             double s_f, double dt,
                             const Eigen::Vector2d& process_noise_var);

// One-sided chance-constraint back-off. Throws std::invalid_argument on a
// negative variance.
double tighten_lower(double bound, double variance, double z_p);
double tighten_upper(double bound, double variance, double z_p);

struct ChanceSpec {
  double probability = 0.99;  // in [0.5, 1); 0.5 disables the back-off
  double quantile() const;    // z_p = Phi^-1(probability)
  void validate() const;
};

struct SmpcConfig {
  MpcConfig base;  // horizon 32 by default; band normally set
  ChanceSpec chance;

  SmpcConfig() {
    base.horizon = 32;
    base.band = SurvivalBand{};
  }
  void validate() const;
};

// Builds the tractable stochastic NLP. The model reference must outlive the
// returned problem. Covariances are recomputed from the decision vector at
// every evaluation; Sigma_0 = 0.
NlpProblem transcribe_socp(const SmpcConfig& config, const PlantParams& plant,
                           const ResidualModel& model, const State& x0,
                           double u_prev, double s_f, double t_now);

// Covariance sequence (Sigma_0..Sigma_N) implied by a decision vector.
std::vector<Eigen::Matrix2d> socp_covariances(const SmpcConfig& config,
                                              const PlantParams& plant,
                                              const ResidualModel& model,
                                              const State& x0, double s_f,
                                              const Eigen::VectorXd& z);

class StochasticMpc {
 public:
  // model must outlive the controller.
  StochasticMpc(SmpcConfig config, PlantParams plant, const ResidualModel& model);

  struct StepResult {
    double input = 0.0;
    bool fallback = false;
    NlpSolution nlp;
    OcpLayout layout;
    double solve_seconds = 0.0;
    // Band at the current time (NaN while inactive) and the stage-1 tightened
    // band the controller enforced (NaN while inactive as well).
    double band_lower = 0.0, band_upper = 0.0;
    double tight_lower = 0.0, tight_upper = 0.0;
    std::vector<Eigen::Matrix2d> covariances;  // along the solved plan

    Eigen::VectorXd planned_inputs() const { return layout.inputs(nlp.x); }
    Eigen::MatrixXd planned_states() const { return layout.states(nlp.x); }
  };

  StepResult step(const State& measured, double t, double s_f);
  void reset();

  const SmpcConfig& config() const { return config_; }
  double previous_input() const { return u_prev_; }

 private:
  SmpcConfig config_;
  PlantParams plant_;
  const ResidualModel* model_;
  double u_prev_;
  Eigen::VectorXd warm_;
  bool has_warm_ = false;
};

}  // namespace lsmpc

#endif  // LSMPC_SMPC_HPP_
