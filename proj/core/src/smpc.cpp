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

#include "lsmpc/smpc.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

#include "lsmpc/stats.hpp"

namespace lsmpc {

Eigen::MatrixXd JointCov::assemble() const {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(5, 5);
  j.block<2, 2>(0, 0) = 0.5 * (sigma_x + sigma_x.transpose());
  j.block<2, 2>(0, 3) = cross_xd;
  j.block<2, 2>(3, 0) = cross_xd.transpose();
  j.block<2, 2>(3, 3) = 0.5 * (sigma_d + sigma_d.transpose());
  return j;
}

JointCov build_joint_cov(const Eigen::Matrix2d& sigma_x,
                         const Eigen::Matrix2d& sigma_d_total,
                         const Eigen::Matrix2d& mean_jacobian) {
  JointCov j;
  j.sigma_x = sigma_x;
  j.sigma_d = sigma_d_total;
  j.cross_xd = sigma_x * mean_jacobian.transpose();
  return j;
}

Eigen::Matrix2d psd_project(const Eigen::Matrix2d& m) {
  const Eigen::Matrix2d sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(sym);
  if (es.info() != Eigen::Success) {
    throw std::runtime_error("psd_project: eigenvalue decomposition failed");
  }
  const Eigen::Vector2d clipped = es.eigenvalues().cwiseMax(0.0);
  Eigen::Matrix2d out =
      es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

Eigen::Matrix2d propagate_cov(const Eigen::Matrix2d& sigma, const Eigen::Matrix2d& a,
                              const Eigen::Matrix2d& d_jacobian,
                              const Eigen::Vector2d& var_total) {
  Eigen::Matrix2d next = a * sigma * a.transpose() +
                         a * sigma * d_jacobian.transpose() +
                         d_jacobian * sigma * a.transpose();
  next(0, 0) += var_total[0];
  next(1, 1) += var_total[1];
  return psd_project(next);
}

BeliefState propagate_belief(const BeliefState& belief, double input,
                             const ResidualModel& model, const PlantParams& plant,
                             double s_f, double dt,
                             const Eigen::Vector2d& process_noise_var) {
  const State x = State::from(belief.mean);
  const auto pred = model.predict(belief.mean);
  const State nominal = step_nominal(x, input, s_f, plant, dt);
  BeliefState next;
  next.mean = nominal.vec() + pred.mean;
  const DiscreteLin lin = step_nominal_jacobian(x, input, s_f, plant, dt);
  const Eigen::Matrix2d d = model.mean_jacobian(belief.mean);
  next.cov = propagate_cov(belief.cov, lin.A, d, pred.variance + process_noise_var);
  return next;
}

double tighten_lower(double bound, double variance, double z_p) {
  if (variance < 0.0) {
    throw std::invalid_argument("tighten_lower: negative variance");
  }
  return bound + z_p * std::sqrt(variance);
}

double tighten_upper(double bound, double variance, double z_p) {
  if (variance < 0.0) {
    throw std::invalid_argument("tighten_upper: negative variance");
  }
  return bound - z_p * std::sqrt(variance);
}

double ChanceSpec::quantile() const {
  validate();
  return normal_quantile(probability);
}

void ChanceSpec::validate() const {
  if (!(probability >= 0.5) || !(probability < 1.0)) {
    throw std::invalid_argument("chance probability must lie in [0.5, 1)");
  }
}

void SmpcConfig::validate() const {
  base.validate();
  chance.validate();
}

namespace {

struct StageData {
  State x;
  double u = 0.0;
  Eigen::Matrix2d a;        // nominal discrete-state Jacobian
  Eigen::Vector2d b;        // nominal input Jacobian
  Eigen::Vector2d res_var;  // residual model variance at x
  Eigen::Matrix2d d;        // residual mean Jacobian at x
  State fnext;              // hybrid mean successor
};

// One tightened halfspace: sign * (x_state - bound) - z_p * sqrt(Sigma_ii) >= 0.
struct RowSpec {
  int stage = 0;   // 1..N
  int state = 0;   // 0 = biomass, 1 = substrate
  double bound = 0.0;
  double sign = 1.0;  // +1 lower bound, -1 upper bound
};

struct SocpContext {
  SmpcConfig cfg;
  PlantParams plant;
  const ResidualModel* model = nullptr;
  State x0;
  double u_prev = 0.0;
  double s_f = 0.0;
  double t_now = 0.0;
  Eigen::Vector2d noise_var = Eigen::Vector2d::Zero();
  double zp = 0.0;
  OcpLayout lay;
  std::vector<RowSpec> rows;

  // Caches keyed on the evaluated decision vector. The covariance recursion
  // is recomputed from scratch whenever z changes; sensitivities only when a
  // Jacobian or gradient is requested.
  Eigen::VectorXd val_z, sens_z;
  std::vector<StageData> stages;
  std::vector<Eigen::Matrix2d> sigma;                 // Sigma_0..Sigma_N
  std::vector<std::vector<Eigen::Matrix2d>> dsigma;   // [k][decision index]

  void ensure_values(const Eigen::VectorXd& z);
  void ensure_sensitivities(const Eigen::VectorXd& z);

 private:
  StageData make_stage(const State& x, double u, bool with_linearization) const;
};

StageData SocpContext::make_stage(const State& x, double u,
                                  bool with_linearization) const {
  StageData s;
  s.x = x;
  s.u = u;
  const auto pred = model->predict(x.vec());
  s.res_var = pred.variance;
  const State nominal = step_nominal(x, u, s_f, plant, cfg.base.dt);
  s.fnext = State{nominal.biomass + pred.mean[0], nominal.substrate + pred.mean[1]};
  if (with_linearization) {
    const DiscreteLin lin = step_nominal_jacobian(x, u, s_f, plant, cfg.base.dt);
    s.a = lin.A;
    s.b = lin.B;
    s.d = model->mean_jacobian(x.vec());
  }
  return s;
}

void SocpContext::ensure_values(const Eigen::VectorXd& z) {
  if (val_z.size() == z.size() && val_z == z) return;
  const int n = lay.horizon;
  stages.clear();
  stages.reserve(n);
  sigma.assign(n + 1, Eigen::Matrix2d::Zero());
  for (int k = 0; k < n; ++k) {
    State xk = x0;
    if (k > 0) {
      const int xi = lay.state_index(k);
      xk = State{z[xi], z[xi + 1]};
    }
    // The linearization is part of the covariance recursion, so it belongs to
    // the value pass, not only to Jacobian requests.
    stages.push_back(make_stage(xk, z[lay.input_index(k)], true));
    const StageData& s = stages.back();
    sigma[k + 1] = propagate_cov(sigma[k], s.a, s.d, s.res_var + noise_var);
  }
  val_z = z;
}

void SocpContext::ensure_sensitivities(const Eigen::VectorXd& z) {
  ensure_values(z);
  if (sens_z.size() == z.size() && sens_z == z) return;
  const int n = lay.horizon;
  const int nvar = lay.vars();
  dsigma.assign(n + 1, std::vector<Eigen::Matrix2d>(nvar, Eigen::Matrix2d::Zero()));

  auto symmetrize = [](const Eigen::Matrix2d& m) {
    return Eigen::Matrix2d(0.5 * (m + m.transpose()));
  };

  for (int j = 0; j < n; ++j) {
    const StageData& s = stages[j];
    // Local decision components this stage's (A, D, variance) depend on:
    // always the input, and for j >= 1 the two state entries.
    struct Local {
      int z_index;
      int comp;  // 0,1 = state entries, 2 = input
    };
    std::vector<Local> locals;
    locals.push_back({lay.input_index(j), 2});
    if (j >= 1) {
      locals.push_back({lay.state_index(j), 0});
      locals.push_back({lay.state_index(j) + 1, 1});
    }
    for (const Local& loc : locals) {
      const double base = z[loc.z_index];
      const double h = 1e-5 * std::max(1.0, std::abs(base));
      StageData plus, minus;
      if (loc.comp == 2) {
        plus = make_stage(s.x, base + h, true);
        minus = make_stage(s.x, base - h, true);
      } else {
        State xp = s.x, xm = s.x;
        if (loc.comp == 0) {
          xp.biomass += h;
          xm.biomass -= h;
        } else {
          xp.substrate += h;
          xm.substrate -= h;
        }
        plus = make_stage(xp, s.u, true);
        minus = make_stage(xm, s.u, true);
      }
      const Eigen::Matrix2d da = (plus.a - minus.a) / (2.0 * h);
      const Eigen::Matrix2d dd = (plus.d - minus.d) / (2.0 * h);
      const Eigen::Vector2d dv = (plus.res_var - minus.res_var) / (2.0 * h);

      const Eigen::Matrix2d& sj = sigma[j];
      Eigen::Matrix2d seed = da * sj * s.a.transpose() + s.a * sj * da.transpose() +
                             da * sj * s.d.transpose() + s.a * sj * dd.transpose() +
                             dd * sj * s.a.transpose() + s.d * sj * da.transpose();
      seed(0, 0) += dv[0];
      seed(1, 1) += dv[1];
      seed = symmetrize(seed);
      dsigma[j + 1][loc.z_index] = seed;
      // Exact linear propagation of the perturbation through later steps.
      for (int k = j + 1; k < n; ++k) {
        const StageData& sk = stages[k];
        const Eigen::Matrix2d& ds = dsigma[k][loc.z_index];
        dsigma[k + 1][loc.z_index] =
            symmetrize(sk.a * ds * sk.a.transpose() + sk.a * ds * sk.d.transpose() +
                       sk.d * ds * sk.a.transpose());
      }
    }
  }
  sens_z = z;
}

double socp_objective(SocpContext& ctx, const Eigen::VectorXd& z,
                      Eigen::VectorXd* grad) {
  if (grad) {
    ctx.ensure_sensitivities(z);
  } else {
    ctx.ensure_values(z);
  }
  double cost = tracking_cost(ctx.cfg.base, ctx.lay, ctx.u_prev, z, grad);
  const int n = ctx.lay.horizon;
  for (int k = 1; k <= n; ++k) {
    const Eigen::Vector2d w = (k == n) ? ctx.cfg.base.q_terminal : ctx.cfg.base.q_state;
    cost += w[0] * ctx.sigma[k](0, 0) + w[1] * ctx.sigma[k](1, 1);
    if (grad) {
      for (int t = 0; t < ctx.lay.vars(); ++t) {
        const Eigen::Matrix2d& ds = ctx.dsigma[k][t];
        (*grad)[t] += w[0] * ds(0, 0) + w[1] * ds(1, 1);
      }
    }
  }
  return cost;
}

void socp_dynamics(SocpContext& ctx, const Eigen::VectorXd& z, Eigen::VectorXd& c,
                   Eigen::MatrixXd* jac) {
  ctx.ensure_values(z);
  const OcpLayout& lay = ctx.lay;
  const int n = lay.horizon;
  c.resize(2 * n);
  if (jac) jac->setZero(2 * n, lay.vars());
  for (int k = 0; k < n; ++k) {
    const StageData& s = ctx.stages[k];
    const int xnext = lay.state_index(k + 1);
    c[2 * k] = z[xnext] - s.fnext.biomass;
    c[2 * k + 1] = z[xnext + 1] - s.fnext.substrate;
    if (jac) {
      const Eigen::Matrix2d a = s.a + s.d;
      (*jac)(2 * k, xnext) = 1.0;
      (*jac)(2 * k + 1, xnext + 1) = 1.0;
      (*jac)(2 * k, lay.input_index(k)) = -s.b[0];
      (*jac)(2 * k + 1, lay.input_index(k)) = -s.b[1];
      if (k > 0) {
        const int xi = lay.state_index(k);
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j) (*jac)(2 * k + i, xi + j) = -a(i, j);
      }
    }
  }
}

void socp_inequalities(SocpContext& ctx, const Eigen::VectorXd& z, Eigen::VectorXd& c,
                       Eigen::MatrixXd* jac) {
  if (jac) {
    ctx.ensure_sensitivities(z);
  } else {
    ctx.ensure_values(z);
  }
  const OcpLayout& lay = ctx.lay;
  c.resize(static_cast<int>(ctx.rows.size()));
  if (jac) jac->setZero(static_cast<int>(ctx.rows.size()), lay.vars());
  for (size_t r = 0; r < ctx.rows.size(); ++r) {
    const RowSpec& row = ctx.rows[r];
    const double sii = ctx.sigma[row.stage](row.state, row.state);
    const double sd = std::sqrt(std::max(sii, 0.0));
    const double xv = z[lay.state_index(row.stage) + row.state];
    c[static_cast<int>(r)] = row.sign * (xv - row.bound) - ctx.zp * sd;
    if (jac) {
      (*jac)(r, lay.state_index(row.stage) + row.state) += row.sign;
      if (ctx.zp > 0.0 && sii > 1e-18) {
        const double coef = -ctx.zp / (2.0 * sd);
        for (int t = 0; t < lay.vars(); ++t) {
          const double dsii = ctx.dsigma[row.stage][t](row.state, row.state);
          if (dsii != 0.0) (*jac)(r, t) += coef * dsii;
        }
      }
    }
  }
}

std::shared_ptr<SocpContext> make_context(const SmpcConfig& config,
                                          const PlantParams& plant,
                                          const ResidualModel& model, const State& x0,
                                          double u_prev, double s_f, double t_now) {
  config.validate();
  if (!std::isfinite(x0.biomass) || !std::isfinite(x0.substrate)) {
    throw std::invalid_argument("transcribe_socp: non-finite initial state");
  }
  if (s_f < 0.0) {
    throw std::invalid_argument("transcribe_socp: negative influent concentration");
  }
  auto ctx = std::make_shared<SocpContext>();
  ctx->cfg = config;
  ctx->plant = plant;
  ctx->model = &model;
  ctx->x0 = x0;
  ctx->u_prev = u_prev;
  ctx->s_f = s_f;
  ctx->t_now = t_now;
  ctx->noise_var = process_noise_variance(plant, config.base.dt);
  ctx->zp = config.chance.quantile();
  ctx->lay.horizon = config.base.horizon;
  for (int k = 1; k <= config.base.horizon; ++k) {
    ctx->rows.push_back({k, 0, 0.0, 1.0});
    ctx->rows.push_back({k, 1, 0.0, 1.0});
    if (config.base.band) {
      const double tk = t_now + k * config.base.dt;
      if (config.base.band->active(tk)) {
        ctx->rows.push_back({k, 0, config.base.band->lower(tk), 1.0});
        ctx->rows.push_back({k, 0, config.base.band->upper(tk), -1.0});
      }
    }
  }
  return ctx;
}

}  // namespace

NlpProblem transcribe_socp(const SmpcConfig& config, const PlantParams& plant,
                           const ResidualModel& model, const State& x0,
                           double u_prev, double s_f, double t_now) {
  auto ctx = make_context(config, plant, model, x0, u_prev, s_f, t_now);
  NlpProblem p;
  p.n = ctx->lay.vars();
  p.m_eq = 2 * config.base.horizon;
  p.m_in = static_cast<int>(ctx->rows.size());
  p.lb = Eigen::VectorXd::Constant(p.n, -std::numeric_limits<double>::infinity());
  p.ub = Eigen::VectorXd::Constant(p.n, std::numeric_limits<double>::infinity());
  for (int k = 0; k < config.base.horizon; ++k) {
    p.lb[ctx->lay.input_index(k)] = config.base.input_min;
    p.ub[ctx->lay.input_index(k)] = config.base.input_max;
  }
  p.objective = [ctx](const Eigen::VectorXd& z, Eigen::VectorXd* grad) {
    return socp_objective(*ctx, z, grad);
  };
  p.eq_constraints = [ctx](const Eigen::VectorXd& z, Eigen::VectorXd& c,
                           Eigen::MatrixXd* jac) { socp_dynamics(*ctx, z, c, jac); };
  p.in_constraints = [ctx](const Eigen::VectorXd& z, Eigen::VectorXd& c,
                           Eigen::MatrixXd* jac) { socp_inequalities(*ctx, z, c, jac); };
  p.hessian_init = tracking_cost_hessian(config.base, ctx->lay);
  return p;
}

std::vector<Eigen::Matrix2d> socp_covariances(const SmpcConfig& config,
                                              const PlantParams& plant,
                                              const ResidualModel& model,
                                              const State& x0, double s_f,
                                              const Eigen::VectorXd& z) {
  auto ctx = make_context(config, plant, model, x0, config.base.u_ref, s_f, 0.0);
  ctx->ensure_values(z);
  return ctx->sigma;
}

StochasticMpc::StochasticMpc(SmpcConfig config, PlantParams plant,
                             const ResidualModel& model)
    : config_(std::move(config)), plant_(plant), model_(&model),
      u_prev_(config_.base.u_ref) {
  config_.validate();
  plant_.validate();
}

void StochasticMpc::reset() {
  u_prev_ = config_.base.u_ref;
  has_warm_ = false;
}

StochasticMpc::StepResult StochasticMpc::step(const State& measured, double t,
                                              double s_f) {
  NlpProblem problem =
      transcribe_socp(config_, plant_, *model_, measured, u_prev_, s_f, t);
  const OcpLayout lay{config_.base.horizon};

  Eigen::VectorXd z0;
  if (has_warm_) {
    z0 = shift_plan(lay, warm_);
  } else {
    z0.resize(lay.vars());
    for (int k = 0; k < config_.base.horizon; ++k) {
      z0[lay.input_index(k)] = config_.base.u_ref;
      z0[lay.state_index(k + 1)] = measured.biomass;
      z0[lay.state_index(k + 1) + 1] = measured.substrate;
    }
  }

  StepResult result;
  result.layout = lay;
  // The inequality-row layout changes as band stages activate, so the active
  // set is not carried across steps; only the shifted plan is.
  result.nlp = solve_sqp(problem, z0, config_.base.solver, nullptr);
  result.solve_seconds = result.nlp.wall_seconds;
  if (ocp_solution_usable(result.nlp)) {
    result.input = std::clamp(result.nlp.x[lay.input_index(0)],
                              config_.base.input_min, config_.base.input_max);
    warm_ = result.nlp.x;
    has_warm_ = true;
  } else {
    result.input = u_prev_;
    result.fallback = true;
    has_warm_ = false;
  }
  u_prev_ = result.input;

  result.covariances =
      socp_covariances(config_, plant_, *model_, measured, s_f, result.nlp.x);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  result.band_lower = result.band_upper = nan;
  result.tight_lower = result.tight_upper = nan;
  if (config_.base.band) {
    const SurvivalBand& band = *config_.base.band;
    if (band.active(t)) {
      result.band_lower = band.lower(t);
      result.band_upper = band.upper(t);
    }
    const double t1 = t + config_.base.dt;
    if (band.active(t1)) {
      const double zp = config_.chance.quantile();
      const double var1 = result.covariances.at(1)(0, 0);
      result.tight_lower = tighten_lower(band.lower(t1), var1, zp);
      result.tight_upper = tighten_upper(band.upper(t1), var1, zp);
    }
  }
  return result;
}

}  // namespace lsmpc
