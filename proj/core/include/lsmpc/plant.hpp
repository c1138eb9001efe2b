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
// Continuous culture bioreactor: a single stirred tank where biomass X eats
// substrate S, fed at flow rate F with influent substrate concentration S_f.
//
//   dX/dt = mu(X,S) X - (F/V) X - K_d X
//   dS/dt = (F/V) (S_f - S) - mu(X,S) X / Y
//
// The simulated truth uses Contois growth kinetics; the controller's nominal
// model uses Monod kinetics with deliberately perturbed parameters, so the
// controller model is structurally and parametrically wrong. The learned
// residual models in gp.hpp / bnn.hpp absorb that discrepancy.

#ifndef LSMPC_PLANT_HPP_
#define LSMPC_PLANT_HPP_

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "lsmpc/stats.hpp"

namespace lsmpc {

// Reactor state in raw units (mg/L).
struct State {
  double biomass = 0.0;    // X
  double substrate = 0.0;  // S

  Eigen::Vector2d vec() const { return {biomass, substrate}; }
  static State from(const Eigen::Vector2d& v) { return {v[0], v[1]}; }

  State operator+(const State& o) const { return {biomass + o.biomass, substrate + o.substrate}; }
  State operator*(double a) const { return {biomass * a, substrate * a}; }
};

inline State operator*(double a, const State& s) { return s * a; }

struct PlantParams {
  double death_rate = 0.0131;      // K_d, 1/d
  double yield = 0.2116;           // Y, biomass produced per substrate consumed
  double volume = 5.0;             // V, L
  double mu_max_contois = 0.9297;  // 1/d
  double contois_b = 0.4818;       // Contois saturation coefficient
  double mu_max_monod = 0.6275;    // 1/d
  double k_s = 443.1;              // Monod half-velocity constant, mg/L
  Eigen::Vector2d sigma_w{1.0, 1.0};  // process noise std per state, mg/(L d^{1/2})
  double mismatch_k_s = 1.10;      // factor the controller model applies to k_s
  double mismatch_mu_max = 0.80;   // factor the controller model applies to mu_max_monod

  double dilution(double flow) const { return flow / volume; }

  // Throws std::invalid_argument when a physical parameter is non-positive or
  // a noise std is negative.
  void validate() const;
};

// Contois specific growth rate; rate saturates in X as well as S.
// Safe at X = S = 0 (returns 0).
double growth_contois(double biomass, double substrate, const PlantParams& p);

// Monod specific growth rate with the table parameters.
double growth_monod(double substrate, const PlantParams& p);

// Monod growth as the controller sees it: mismatch factors applied first.
double growth_monod_controller(double substrate, const PlantParams& p);

// Right-hand side of the reactor ODE for an arbitrary growth law
// mu(biomass, substrate) -> 1/d.
template <class GrowthFn>
State plant_rhs(const State& x, double flow, double s_f, const PlantParams& p, GrowthFn mu) {
  const double rate = mu(x.biomass, x.substrate);
  const double d = p.dilution(flow);
  State dx;
  dx.biomass = rate * x.biomass - d * x.biomass - p.death_rate * x.biomass;
  dx.substrate = d * (s_f - x.substrate) - rate * x.biomass / p.yield;
  return dx;
}

State true_rhs(const State& x, double flow, double s_f, const PlantParams& p);
State nominal_rhs(const State& x, double flow, double s_f, const PlantParams& p);

// Classical fixed-step RK4 with inputs held constant over the step.
// Works for any state type with operator+ and scalar multiply (incl. double).
// Throws std::runtime_error on non-finite intermediates.
template <class X, class Rhs>
X rk4_step(Rhs rhs, const X& x0, double dt) {
  const X k1 = rhs(x0);
  const X k2 = rhs(x0 + (0.5 * dt) * k1);
  const X k3 = rhs(x0 + (0.5 * dt) * k2);
  const X k4 = rhs(x0 + dt * k3);
  X out = x0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if constexpr (std::is_same_v<X, double>) {
    if (!std::isfinite(out)) throw std::runtime_error("rk4_step: non-finite state");
  } else {
    if (!std::isfinite(out.biomass) || !std::isfinite(out.substrate)) {
      throw std::runtime_error("rk4_step: non-finite state");
    }
  }
  return out;
}

inline State operator*(const State& s, const State&) = delete;

// One noise-free step of the simulated truth (Contois kinetics).
State step_true_noisefree(const State& x, double flow, double s_f, const PlantParams& p, double dt);

// One step of the controller's nominal model (mismatched Monod kinetics).
// This is the discrete map the MPC transcriptions and residual labels use.
State step_nominal(const State& x, double flow, double s_f, const PlantParams& p, double dt);

// Linearization of step_nominal: A = d x+ / d x (2x2), B = d x+ / d F (2x1).
// Exact chain rule through the four RK4 stages, so finite-difference checks
// agree to truncation error.
struct DiscreteLin {
  Eigen::Matrix2d A;
  Eigen::Vector2d B;
};
DiscreteLin step_nominal_jacobian(const State& x, double flow, double s_f, const PlantParams& p,
                                  double dt);

// One step of the noisy truth: RK4 of the Contois ODE, then additive process
// noise sigma_w * sqrt(dt) * N(0,1) per state, then clamping at zero.
// The sqrt(dt) scaling makes the discrete noise consistent with a continuous
// white-noise disturbance of intensity sigma_w independent of step size.
State step_true_plant(const State& x, double flow, double s_f, const PlantParams& p, double dt,
                      Rng& rng);

// Per-state variance of the discrete process noise above: sigma_w^2 * dt.
Eigen::Vector2d process_noise_variance(const PlantParams& p, double dt);

// Frozen frequency draw for the influent substrate disturbance. Each frequency
// comes from a symmetric two-component Gaussian mixture and stays fixed for a
// whole episode.
struct DisturbanceDraw {
  double w_t = 0.0;
  double w_pi = 0.0;
  double w_e = 0.0;

  static DisturbanceDraw sample(Rng& rng);
};

// Influent substrate concentration at time t (days):
//   base + amp * (sin(w_t t) + sin(w_pi pi t) + sin(w_e e t)).
double influent_substrate(double t, const DisturbanceDraw& d, double base = 5500.0,
                          double amplitude = 100.0);

// Mean and per-state variance of a learned one-step prediction; raw units.
struct HybridPrediction {
  State mean;
  Eigen::Vector2d variance;
};

class ResidualModel;  // model_interface.hpp

// One step of the hybrid model: nominal step plus learned residual mean, with
// predictive variance = model variance + discrete process noise variance.
HybridPrediction hybrid_step(const State& x, double flow, double s_f, const ResidualModel& model,
                             const PlantParams& p, double dt);

}  // namespace lsmpc

#endif  // LSMPC_PLANT_HPP_
