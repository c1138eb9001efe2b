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

#include "lsmpc/plant.hpp"

#include <cmath>

#include "lsmpc/model_interface.hpp"

namespace lsmpc {

void PlantParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string("PlantParams: ") + name + " must be positive");
    }
  };
  positive(death_rate, "death_rate");
  positive(yield, "yield");
  positive(volume, "volume");
  positive(mu_max_contois, "mu_max_contois");
  positive(contois_b, "contois_b");
  positive(mu_max_monod, "mu_max_monod");
  positive(k_s, "k_s");
  positive(mismatch_k_s, "mismatch_k_s");
  positive(mismatch_mu_max, "mismatch_mu_max");
  if (sigma_w[0] < 0.0 || sigma_w[1] < 0.0) {
    throw std::invalid_argument("PlantParams: sigma_w must be nonnegative");
  }
}

double growth_contois(double biomass, double substrate, const PlantParams& p) {
  const double denom = p.contois_b * biomass + substrate;
  if (denom <= 0.0) return 0.0;
  return p.mu_max_contois * substrate / denom;
}

double growth_monod(double substrate, const PlantParams& p) {
  const double denom = p.k_s + substrate;
  if (denom <= 0.0) return 0.0;
  return p.mu_max_monod * substrate / denom;
}

double growth_monod_controller(double substrate, const PlantParams& p) {
  const double k_s = p.k_s * p.mismatch_k_s;
  const double mu_max = p.mu_max_monod * p.mismatch_mu_max;
  const double denom = k_s + substrate;
  if (denom <= 0.0) return 0.0;
  return mu_max * substrate / denom;
}

State true_rhs(const State& x, double flow, double s_f, const PlantParams& p) {
  return plant_rhs(x, flow, s_f, p,
                   [&p](double b, double s) { return growth_contois(b, s, p); });
}

State nominal_rhs(const State& x, double flow, double s_f, const PlantParams& p) {
  return plant_rhs(x, flow, s_f, p,
                   [&p](double, double s) { return growth_monod_controller(s, p); });
}

State step_true_noisefree(const State& x, double flow, double s_f, const PlantParams& p,
                          double dt) {
  return rk4_step([&](const State& y) { return true_rhs(y, flow, s_f, p); }, x, dt);
}

State step_nominal(const State& x, double flow, double s_f, const PlantParams& p, double dt) {
  return rk4_step([&](const State& y) { return nominal_rhs(y, flow, s_f, p); }, x, dt);
}

namespace {

// Jacobian of the nominal (mismatched Monod) RHS w.r.t. state and flow.
// Monod growth depends on S only, which keeps the expressions short.
struct RhsLin {
  Eigen::Matrix2d jx;
  Eigen::Vector2d ju;
};

RhsLin nominal_rhs_jacobian(const State& x, double flow, double s_f, const PlantParams& p) {
  const double k_s = p.k_s * p.mismatch_k_s;
  const double mu_max = p.mu_max_monod * p.mismatch_mu_max;
  const double denom = k_s + x.substrate;
  const double mu = denom > 0.0 ? mu_max * x.substrate / denom : 0.0;
  const double dmu_ds = denom > 0.0 ? mu_max * k_s / (denom * denom) : 0.0;
  const double d = p.dilution(flow);

  RhsLin lin;
  lin.jx(0, 0) = mu - d - p.death_rate;
  lin.jx(0, 1) = dmu_ds * x.biomass;
  lin.jx(1, 0) = -mu / p.yield;
  lin.jx(1, 1) = -d - dmu_ds * x.biomass / p.yield;
  lin.ju[0] = -x.biomass / p.volume;
  lin.ju[1] = (s_f - x.substrate) / p.volume;
  return lin;
}

}  // namespace

DiscreteLin step_nominal_jacobian(const State& x, double flow, double s_f, const PlantParams& p,
                                  double dt) {
  // Stage sensitivities: K_i = d k_i / d x0, P_i = d k_i / d F, propagated by
  // the chain rule through the RK4 stage states.
  const State k1 = nominal_rhs(x, flow, s_f, p);
  const State x2 = x + (0.5 * dt) * k1;
  const State k2 = nominal_rhs(x2, flow, s_f, p);
  const State x3 = x + (0.5 * dt) * k2;
  const State k3 = nominal_rhs(x3, flow, s_f, p);
  const State x4 = x + dt * k3;

  const RhsLin l1 = nominal_rhs_jacobian(x, flow, s_f, p);
  const RhsLin l2 = nominal_rhs_jacobian(x2, flow, s_f, p);
  const RhsLin l3 = nominal_rhs_jacobian(x3, flow, s_f, p);
  const RhsLin l4 = nominal_rhs_jacobian(x4, flow, s_f, p);

  const Eigen::Matrix2d I = Eigen::Matrix2d::Identity();
  const Eigen::Matrix2d K1 = l1.jx;
  const Eigen::Vector2d P1 = l1.ju;
  const Eigen::Matrix2d K2 = l2.jx * (I + 0.5 * dt * K1);
  const Eigen::Vector2d P2 = l2.ju + l2.jx * (0.5 * dt * P1);
  const Eigen::Matrix2d K3 = l3.jx * (I + 0.5 * dt * K2);
  const Eigen::Vector2d P3 = l3.ju + l3.jx * (0.5 * dt * P2);
  const Eigen::Matrix2d K4 = l4.jx * (I + dt * K3);
  const Eigen::Vector2d P4 = l4.ju + l4.jx * (dt * P3);

  DiscreteLin lin;
  lin.A = I + (dt / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4);
  lin.B = (dt / 6.0) * (P1 + 2.0 * P2 + 2.0 * P3 + P4);
  return lin;
}

State step_true_plant(const State& x, double flow, double s_f, const PlantParams& p, double dt,
                      Rng& rng) {
  State next = step_true_noisefree(x, flow, s_f, p, dt);
  const double scale = std::sqrt(dt);
  next.biomass += p.sigma_w[0] * scale * rng.normal();
  next.substrate += p.sigma_w[1] * scale * rng.normal();
  next.biomass = std::max(next.biomass, 0.0);
  next.substrate = std::max(next.substrate, 0.0);
  return next;
}

Eigen::Vector2d process_noise_variance(const PlantParams& p, double dt) {
  return {p.sigma_w[0] * p.sigma_w[0] * dt, p.sigma_w[1] * p.sigma_w[1] * dt};
}

DisturbanceDraw DisturbanceDraw::sample(Rng& rng) {
  auto mixture = [&rng](double mean_magnitude) {
    const double sign = rng.uniform() < 0.5 ? 1.0 : -1.0;
    return sign * mean_magnitude + 0.1 * rng.normal();
  };
  DisturbanceDraw d;
  d.w_t = mixture(0.3);
  d.w_pi = mixture(0.01);
  d.w_e = mixture(0.08);
  return d;
}

double influent_substrate(double t, const DisturbanceDraw& d, double base, double amplitude) {
  return base + amplitude * (std::sin(d.w_t * t) + std::sin(d.w_pi * M_PI * t) +
                             std::sin(d.w_e * M_E * t));
}

HybridPrediction hybrid_step(const State& x, double flow, double s_f, const ResidualModel& model,
                             const PlantParams& p, double dt) {
  const State nominal = step_nominal(x, flow, s_f, p, dt);
  const ResidualPrediction res = model.predict(x.vec());
  HybridPrediction out;
  out.mean = State::from(nominal.vec() + res.mean);
  out.variance = res.variance + process_noise_variance(p, dt);
  return out;
}

}  // namespace lsmpc
