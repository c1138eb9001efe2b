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
// Receding-horizon tracking MPC over the nominal (or hybrid-mean) discrete
// reactor model. Multiple-shooting transcription: the decision vector
// interleaves inputs and successor states, the dynamics enter as equality
// constraints, and state bounds are plain variable bounds.

#ifndef LSMPC_MPC_HPP_
#define LSMPC_MPC_HPP_

#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "lsmpc/model_interface.hpp"
#include "lsmpc/nlp.hpp"
#include "lsmpc/plant.hpp"

namespace lsmpc {

// Time-varying biomass corridor that keeps the culture alive. Both edges are
// tanh ramps in the time elapsed since activation; the lower edge starts near
// zero and the upper edge starts well below the reference, forcing the
// controller to dip and then recover.
struct SurvivalBand {
  double activation_time = 30.0;  // absolute simulation time, d
  double ref_biomass = 1046.28;   // X_ref the corridor is centered on, mg/L
  double half_width = 20.0;       // asymptotic distance from X_ref, mg/L

  bool active(double t) const { return t >= activation_time; }
  // Edges as a function of absolute episode time, mg/L.  The tanh ramps rise
  // from near zero at t = 0, but the corridor is only enforced once active();
  // by then both curves are within a few mg/L of their ref +- half_width
  // asymptotes, so the corridor always contains the reference.
  double lower(double t) const {
    return (ref_biomass - half_width) * std::tanh(0.1 * t + 0.01);
  }
  double upper(double t) const {
    return (ref_biomass + half_width) * std::tanh(0.1 * t + 1.0);
  }
};

struct MpcConfig {
  int horizon = 80;
  double dt = 0.125;  // d
  Eigen::Vector2d q_state{10.0, 10.0};     // stage tracking weight (diagonal)
  Eigen::Vector2d q_terminal{10.0, 10.0};  // terminal tracking weight
  double r_input = 1.0;                    // input tracking weight
  double r_move = 5000.0;                  // move-suppression weight
  Eigen::Vector2d x_ref{1046.28, 101.615};
  double u_ref = 0.714286;
  double input_min = 0.0;
  double input_max = 2.0;
  std::optional<SurvivalBand> band;  // absent => only X,S >= 0
  SqpOptions solver;

  void validate() const;  // throws std::invalid_argument
};

// Index bookkeeping for the decision vector
//   z = [u_0, x_1, u_1, x_2, ..., u_{N-1}, x_N],   states two wide.
struct OcpLayout {
  int horizon = 0;

  int vars() const { return 3 * horizon; }
  int input_index(int k) const { return 3 * k; }          // 0 <= k < N
  int state_index(int k) const { return 3 * (k - 1) + 1; }  // 1 <= k <= N

  Eigen::VectorXd inputs(const Eigen::VectorXd& z) const;
  Eigen::MatrixXd states(const Eigen::VectorXd& z) const;  // 2 x N, column k-1 = x_k
};

// Quadratic tracking cost over a decision vector: stage and terminal state
// deviation, input deviation, move suppression with u_{-1} = u_prev. When
// grad is non-null it is resized and overwritten. Shared with the stochastic
// controller, whose expected cost is this plus covariance trace terms.
double tracking_cost(const MpcConfig& config, const OcpLayout& layout, double u_prev,
                     const Eigen::VectorXd& z, Eigen::VectorXd* grad);

// Exact (constant) Hessian of tracking_cost; positive definite whenever the
// weights are positive, which makes it a good quasi-Newton seed.
Eigen::MatrixXd tracking_cost_hessian(const MpcConfig& config, const OcpLayout& layout);

// Builds the tracking NLP from the current measurement. The influent
// concentration s_f is frozen over the whole horizon. When residual is
// non-null the dynamics are the hybrid mean (nominal step plus residual
// mean); the pointer must outlive the returned problem. t_now fixes which
// horizon stages fall under the survival band.
NlpProblem transcribe_ocp(const MpcConfig& config, const PlantParams& plant,
                          const ResidualModel* residual, const State& x0,
                          double u_prev, double s_f, double t_now);

class NominalMpc {
 public:
  // residual may be null (purely nominal model); if set it must outlive the
  // controller.
  NominalMpc(MpcConfig config, PlantParams plant, const ResidualModel* residual = nullptr);

  struct StepResult {
    double input = 0.0;
    bool fallback = false;  // solver failed; input is the previous one
    NlpSolution nlp;
    OcpLayout layout;
    double solve_seconds = 0.0;

    Eigen::VectorXd planned_inputs() const { return layout.inputs(nlp.x); }
    Eigen::MatrixXd planned_states() const { return layout.states(nlp.x); }
  };

  StepResult step(const State& measured, double t, double s_f);
  void reset();

  const MpcConfig& config() const { return config_; }
  double previous_input() const { return u_prev_; }

 private:
  MpcConfig config_;
  PlantParams plant_;
  const ResidualModel* residual_;
  double u_prev_;
  Eigen::VectorXd warm_;
  std::vector<int> warm_active_;
  bool has_warm_ = false;
};

// Shared by the nominal and stochastic controllers: accept the solve when it
// converged or at least ended nearly feasible (the plan is then usable even
// if optimality is slightly off).
bool ocp_solution_usable(const NlpSolution& solution);

// Shift-and-repeat warm start: drop stage 0, duplicate the last stage.
Eigen::VectorXd shift_plan(const OcpLayout& layout, const Eigen::VectorXd& z);

}  // namespace lsmpc

#endif  // LSMPC_MPC_HPP_
