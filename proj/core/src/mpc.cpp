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

#include "lsmpc/mpc.hpp"

#include <limits>
#include <memory>
#include <stdexcept>

namespace lsmpc {

void MpcConfig::validate() const {
  if (horizon < 1) throw std::invalid_argument("MPC horizon must be >= 1");
  if (!(dt > 0.0)) throw std::invalid_argument("MPC dt must be positive");
  if (q_state.minCoeff() < 0.0 || q_terminal.minCoeff() < 0.0 || r_input < 0.0 ||
      r_move < 0.0) {
    throw std::invalid_argument("MPC weights must be nonnegative");
  }
  if (!(input_min <= input_max)) {
    throw std::invalid_argument("MPC input bounds are inconsistent");
  }
  if (band && band->half_width >= band->ref_biomass) {
    throw std::invalid_argument("survival band wider than its reference");
  }
}

Eigen::VectorXd OcpLayout::inputs(const Eigen::VectorXd& z) const {
  Eigen::VectorXd u(horizon);
  for (int k = 0; k < horizon; ++k) u[k] = z[input_index(k)];
  return u;
}

Eigen::MatrixXd OcpLayout::states(const Eigen::VectorXd& z) const {
  Eigen::MatrixXd x(2, horizon);
  for (int k = 1; k <= horizon; ++k) {
    x(0, k - 1) = z[state_index(k)];
    x(1, k - 1) = z[state_index(k) + 1];
  }
  return x;
}

namespace {

// Everything the transcription callbacks need, captured once by shared_ptr so
// the returned NlpProblem owns its context.
struct OcpContext {
  MpcConfig cfg;
  PlantParams plant;
  const ResidualModel* residual = nullptr;
  State x0;
  double u_prev = 0.0;
  double s_f = 0.0;
  OcpLayout layout;
};

}  // namespace

double tracking_cost(const MpcConfig& cfg, const OcpLayout& lay, double u_prev,
                     const Eigen::VectorXd& z, Eigen::VectorXd* grad) {
  const int n = lay.horizon;
  if (grad) grad->setZero(lay.vars());
  double cost = 0.0;
  for (int k = 1; k <= n; ++k) {
    const Eigen::Vector2d w = (k == n) ? cfg.q_terminal : cfg.q_state;
    const int xi = lay.state_index(k);
    for (int i = 0; i < 2; ++i) {
      const double e = z[xi + i] - cfg.x_ref[i];
      cost += w[i] * e * e;
      if (grad) (*grad)[xi + i] += 2.0 * w[i] * e;
    }
  }
  for (int k = 0; k < n; ++k) {
    const int ui = lay.input_index(k);
    const double eu = z[ui] - cfg.u_ref;
    cost += cfg.r_input * eu * eu;
    if (grad) (*grad)[ui] += 2.0 * cfg.r_input * eu;
    const double prev = (k == 0) ? u_prev : z[lay.input_index(k - 1)];
    const double du = z[ui] - prev;
    cost += cfg.r_move * du * du;
    if (grad) {
      (*grad)[ui] += 2.0 * cfg.r_move * du;
      if (k > 0) (*grad)[lay.input_index(k - 1)] -= 2.0 * cfg.r_move * du;
    }
  }
  return cost;
}

Eigen::MatrixXd tracking_cost_hessian(const MpcConfig& cfg, const OcpLayout& lay) {
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(lay.vars(), lay.vars());
  const int n = lay.horizon;
  for (int k = 1; k <= n; ++k) {
    const Eigen::Vector2d w = (k == n) ? cfg.q_terminal : cfg.q_state;
    const int xi = lay.state_index(k);
    h(xi, xi) += 2.0 * w[0];
    h(xi + 1, xi + 1) += 2.0 * w[1];
  }
  for (int k = 0; k < n; ++k) {
    const int ui = lay.input_index(k);
    h(ui, ui) += 2.0 * cfg.r_input + 2.0 * cfg.r_move;
    if (k > 0) {
      const int up = lay.input_index(k - 1);
      h(up, up) += 2.0 * cfg.r_move;
      h(ui, up) -= 2.0 * cfg.r_move;
      h(up, ui) -= 2.0 * cfg.r_move;
    }
  }
  return h;
}

namespace {

void ocp_dynamics(const OcpContext& ctx, const Eigen::VectorXd& z,
                  Eigen::VectorXd& c, Eigen::MatrixXd* jac) {
  const OcpLayout& lay = ctx.layout;
  const int n = lay.horizon;
  c.resize(2 * n);
  if (jac) jac->setZero(2 * n, lay.vars());
  State xk = ctx.x0;
  for (int k = 0; k < n; ++k) {
    if (k > 0) {
      const int xi = lay.state_index(k);
      xk = State{z[xi], z[xi + 1]};
    }
    const double u = z[lay.input_index(k)];
    State next = step_nominal(xk, u, ctx.s_f, ctx.plant, ctx.cfg.dt);
    Eigen::Matrix2d dmodel = Eigen::Matrix2d::Zero();
    if (ctx.residual) {
      const auto pred = ctx.residual->predict(xk.vec());
      next.biomass += pred.mean[0];
      next.substrate += pred.mean[1];
      if (jac) dmodel = ctx.residual->mean_jacobian(xk.vec());
    }
    const int xnext = lay.state_index(k + 1);
    c[2 * k] = z[xnext] - next.biomass;
    c[2 * k + 1] = z[xnext + 1] - next.substrate;
    if (jac) {
      const DiscreteLin lin =
          step_nominal_jacobian(xk, u, ctx.s_f, ctx.plant, ctx.cfg.dt);
      const Eigen::Matrix2d a = lin.A + dmodel;
      (*jac)(2 * k, xnext) = 1.0;
      (*jac)(2 * k + 1, xnext + 1) = 1.0;
      (*jac)(2 * k, lay.input_index(k)) = -lin.B[0];
      (*jac)(2 * k + 1, lay.input_index(k)) = -lin.B[1];
      if (k > 0) {
        const int xi = lay.state_index(k);
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j) (*jac)(2 * k + i, xi + j) = -a(i, j);
      }
    }
  }
}

}  // namespace

NlpProblem transcribe_ocp(const MpcConfig& config, const PlantParams& plant,
                          const ResidualModel* residual, const State& x0,
                          double u_prev, double s_f, double t_now) {
  config.validate();
  if (!std::isfinite(x0.biomass) || !std::isfinite(x0.substrate)) {
    throw std::invalid_argument("transcribe_ocp: non-finite initial state");
  }
  if (s_f < 0.0) {
    throw std::invalid_argument("transcribe_ocp: negative influent concentration");
  }
  auto ctx = std::make_shared<OcpContext>();
  ctx->cfg = config;
  ctx->plant = plant;
  ctx->residual = residual;
  ctx->x0 = x0;
  ctx->u_prev = u_prev;
  ctx->s_f = s_f;
  ctx->layout.horizon = config.horizon;

  const OcpLayout& lay = ctx->layout;
  NlpProblem p;
  p.n = lay.vars();
  p.m_eq = 2 * config.horizon;
  p.m_in = 0;
  p.lb = Eigen::VectorXd::Constant(p.n, -std::numeric_limits<double>::infinity());
  p.ub = Eigen::VectorXd::Constant(p.n, std::numeric_limits<double>::infinity());
  for (int k = 0; k < config.horizon; ++k) {
    p.lb[lay.input_index(k)] = config.input_min;
    p.ub[lay.input_index(k)] = config.input_max;
  }
  for (int k = 1; k <= config.horizon; ++k) {
    const int xi = lay.state_index(k);
    p.lb[xi] = 0.0;      // biomass cannot go negative
    p.lb[xi + 1] = 0.0;  // neither can substrate
    if (config.band) {
      const double tk = t_now + k * config.dt;
      if (config.band->active(tk)) {
        p.lb[xi] = std::max(p.lb[xi], config.band->lower(tk));
        p.ub[xi] = config.band->upper(tk);
      }
    }
  }
  p.objective = [ctx](const Eigen::VectorXd& z, Eigen::VectorXd* grad) {
    return tracking_cost(ctx->cfg, ctx->layout, ctx->u_prev, z, grad);
  };
  p.eq_constraints = [ctx](const Eigen::VectorXd& z, Eigen::VectorXd& c,
                           Eigen::MatrixXd* jac) { ocp_dynamics(*ctx, z, c, jac); };
  p.hessian_init = tracking_cost_hessian(config, lay);
  return p;
}

bool ocp_solution_usable(const NlpSolution& solution) {
  if (solution.status == NlpStatus::converged) return true;
  // A near-feasible plan still yields a sensible first input.
  return std::isfinite(solution.kkt_feasibility) && solution.kkt_feasibility <= 1e-4;
}

Eigen::VectorXd shift_plan(const OcpLayout& layout, const Eigen::VectorXd& z) {
  Eigen::VectorXd out = z;
  const int n = layout.horizon;
  for (int k = 0; k + 1 < n; ++k) {
    out[layout.input_index(k)] = z[layout.input_index(k + 1)];
    out[layout.state_index(k + 1)] = z[layout.state_index(k + 2)];
    out[layout.state_index(k + 1) + 1] = z[layout.state_index(k + 2) + 1];
  }
  return out;
}

NominalMpc::NominalMpc(MpcConfig config, PlantParams plant, const ResidualModel* residual)
    : config_(std::move(config)), plant_(plant), residual_(residual),
      u_prev_(config_.u_ref) {
  config_.validate();
  plant_.validate();
}

void NominalMpc::reset() {
  u_prev_ = config_.u_ref;
  has_warm_ = false;
  warm_active_.clear();
}

NominalMpc::StepResult NominalMpc::step(const State& measured, double t, double s_f) {
  NlpProblem problem =
      transcribe_ocp(config_, plant_, residual_, measured, u_prev_, s_f, t);
  const OcpLayout lay{config_.horizon};

  Eigen::VectorXd z0;
  if (has_warm_) {
    z0 = shift_plan(lay, warm_);
  } else {
    z0.resize(lay.vars());
    for (int k = 0; k < config_.horizon; ++k) {
      z0[lay.input_index(k)] = config_.u_ref;
      z0[lay.state_index(k + 1)] = measured.biomass;
      z0[lay.state_index(k + 1) + 1] = measured.substrate;
    }
  }

  StepResult result;
  result.layout = lay;
  result.nlp = solve_sqp(problem, z0, config_.solver,
                         has_warm_ ? &warm_active_ : nullptr);
  result.solve_seconds = result.nlp.wall_seconds;
  if (ocp_solution_usable(result.nlp)) {
    result.input = std::clamp(result.nlp.x[lay.input_index(0)], config_.input_min,
                              config_.input_max);
    warm_ = result.nlp.x;
    warm_active_ = result.nlp.active_set;
    has_warm_ = true;
  } else {
    result.input = u_prev_;
    result.fallback = true;
    has_warm_ = false;  // the stale plan caused trouble; restart cold next step
    warm_active_.clear();
  }
  u_prev_ = result.input;
  return result;
}

}  // namespace lsmpc
