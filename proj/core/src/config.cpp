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

#include "lsmpc/config.hpp"

#include <functional>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "lsmpc/csv.hpp"
#include "lsmpc/stats.hpp"

namespace lsmpc {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

using Handler = std::function<void(const json&)>;
using Section = std::map<std::string, Handler>;

void apply_section(const json& j, const std::string& name,
                   const Section& handlers) {
  if (!j.is_object()) {
    throw std::runtime_error("config: section '" + name +
                             "' must be an object");
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    auto h = handlers.find(it.key());
    if (h == handlers.end()) {
      throw std::runtime_error("config: unknown key '" + it.key() +
                               "' in section '" + name + "'");
    }
    try {
      h->second(it.value());
    } catch (const json::exception& e) {
      throw std::runtime_error("config: bad value for '" + name + "." +
                               it.key() + "': " + e.what());
    }
  }
}

Handler num(double* target) {
  return [target](const json& v) { *target = v.get<double>(); };
}

Handler integer(int* target) {
  return [target](const json& v) { *target = v.get<int>(); };
}

Handler seed_field(std::uint64_t* target) {
  return [target](const json& v) { *target = v.get<std::uint64_t>(); };
}

Handler vec2(Eigen::Vector2d* target) {
  return [target](const json& v) {
    if (!v.is_array() || v.size() != 2) {
      throw std::runtime_error("config: expected an array of two numbers");
    }
    (*target)[0] = v[0].get<double>();
    (*target)[1] = v[1].get<double>();
  };
}

json vec2_json(const Eigen::Vector2d& v) { return json::array({v[0], v[1]}); }

// The stochastic controller shares everything with the nominal one except the
// horizon and the chance level, and the band is centered on the biomass
// reference. Applied after every load so the shared fields cannot drift.
void apply_shared(ExperimentConfig& c) {
  const int smpc_horizon = c.smpc.base.horizon;
  c.smpc.base = c.mpc;
  c.smpc.base.horizon = smpc_horizon;
  c.band.ref_biomass = c.mpc.x_ref[0];
  c.smpc.base.band = c.band;
}

}  // namespace

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig c;
  apply_shared(c);
  return c;
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  ExperimentConfig c;  // field defaults
  json root = json::parse(text);
  if (!root.is_object()) {
    throw std::runtime_error("config: top level must be a JSON object");
  }

  double dt = c.mpc.dt;
  double chance = c.smpc.chance.probability;

  const Section plant{
      {"death_rate", num(&c.plant.death_rate)},
      {"yield", num(&c.plant.yield)},
      {"volume", num(&c.plant.volume)},
      {"mu_max_contois", num(&c.plant.mu_max_contois)},
      {"contois_b", num(&c.plant.contois_b)},
      {"mu_max_monod", num(&c.plant.mu_max_monod)},
      {"k_s", num(&c.plant.k_s)},
      {"sigma_w", vec2(&c.plant.sigma_w)},
      {"mismatch_k_s", num(&c.plant.mismatch_k_s)},
      {"mismatch_mu_max", num(&c.plant.mismatch_mu_max)},
  };
  const Section simulation{
      {"dt", num(&dt)},
      {"x0",
       [&c](const json& v) {
         Eigen::Vector2d x;
         vec2(&x)(v);
         c.sim.x0 = State::from(x);
       }},
      {"s_f_base", num(&c.sim.s_f_base)},
      {"s_f_amplitude", num(&c.sim.s_f_amplitude)},
  };
  const Section mpc{
      {"horizon", integer(&c.mpc.horizon)},
      {"q_state", vec2(&c.mpc.q_state)},
      {"q_terminal", vec2(&c.mpc.q_terminal)},
      {"r_input", num(&c.mpc.r_input)},
      {"r_move", num(&c.mpc.r_move)},
      {"x_ref", vec2(&c.mpc.x_ref)},
      {"u_ref", num(&c.mpc.u_ref)},
      {"input_min", num(&c.mpc.input_min)},
      {"input_max", num(&c.mpc.input_max)},
      {"solver_tol", num(&c.mpc.solver.tol)},
      {"solver_max_iter", integer(&c.mpc.solver.max_iter)},
  };
  const Section smpc{
      {"horizon", integer(&c.smpc.base.horizon)},
      {"chance_probability", num(&chance)},
  };
  const Section band{
      {"activation_time", num(&c.band.activation_time)},
      {"half_width", num(&c.band.half_width)},
  };
  const Section data{
      {"episodes", integer(&c.data.episodes)},
      {"t_sim_days", num(&c.data.t_sim_days)},
      {"trim_days", num(&c.data.trim_days)},
      {"target_points", integer(&c.data.target_points)},
      {"split_ratio", num(&c.data.split_ratio)},
      {"ref_jitter", num(&c.data.ref_jitter)},
      {"sparsify_threshold", num(&c.data.sparsify_threshold)},
      {"base_seed", seed_field(&c.data.base_seed)},
      {"split_seed", seed_field(&c.data.split_seed)},
  };
  const Section gp{
      {"noise_variance", vec2(&c.gp.noise_variance)},
      {"restarts", integer(&c.gp.restarts)},
      {"max_iters", integer(&c.gp.max_iters)},
      {"seed", seed_field(&c.gp.seed)},
  };
  const Section bnn{
      {"hidden_units", integer(&c.bnn.hidden_units)},
      {"epochs", integer(&c.bnn.epochs)},
      {"weight_prior_alpha", num(&c.bnn.weight_prior_alpha)},
      {"weight_prior_beta", num(&c.bnn.weight_prior_beta)},
      {"noise_prior_alpha", vec2(&c.bnn.noise_prior_alpha)},
      {"noise_prior_beta", vec2(&c.bnn.noise_prior_beta)},
      {"seed", seed_field(&c.bnn.seed)},
  };
  const Section open_loop{
      {"t_total_days", num(&c.open_loop.t_total_days)},
      {"step_time", num(&c.open_loop.step_time)},
      {"flow_before", num(&c.open_loop.flow_before)},
      {"flow_after", num(&c.open_loop.flow_after)},
      {"window_days", num(&c.open_loop.window_days)},
  };
  const Section closed_loop{
      {"t_sim_days", num(&c.closed_loop.t_sim_days)},
      {"seeds",
       [&c](const json& v) {
         if (!v.is_array() || v.empty()) {
           throw std::runtime_error(
               "config: closed_loop.seeds must be a non-empty array");
         }
         c.closed_loop.seeds.clear();
         for (const json& e : v) {
           c.closed_loop.seeds.push_back(e.get<std::uint64_t>());
         }
       }},
  };
  const Section benchmark{
      {"gp_sizes",
       [&c](const json& v) {
         if (!v.is_array() || v.empty()) {
           throw std::runtime_error(
               "config: benchmark.gp_sizes must be a non-empty array");
         }
         c.benchmark.gp_sizes.clear();
         for (const json& e : v) c.benchmark.gp_sizes.push_back(e.get<int>());
       }},
      {"episode_days", num(&c.benchmark.episode_days)},
      {"repeats", integer(&c.benchmark.repeats)},
      {"seed", seed_field(&c.benchmark.seed)},
  };
  const Section metrics{
      {"calibration_levels", integer(&c.metrics.calibration_levels)},
      {"heatmap_grid", integer(&c.metrics.heatmap_grid)},
  };

  const std::map<std::string, const Section*> sections{
      {"plant", &plant},       {"simulation", &simulation},
      {"mpc", &mpc},           {"smpc", &smpc},
      {"band", &band},         {"data", &data},
      {"gp", &gp},             {"bnn", &bnn},
      {"open_loop", &open_loop}, {"closed_loop", &closed_loop},
      {"benchmark", &benchmark}, {"metrics", &metrics},
  };
  for (auto it = root.begin(); it != root.end(); ++it) {
    auto s = sections.find(it.key());
    if (s == sections.end()) {
      throw std::runtime_error("config: unknown section '" + it.key() + "'");
    }
    apply_section(it.value(), it.key(), *s->second);
  }

  c.mpc.dt = dt;
  c.smpc.chance.probability = chance;
  apply_shared(c);
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  return from_json_text(read_text_file(path));
}

std::string ExperimentConfig::to_json() const {
  ordered_json j;
  j["plant"] = {{"death_rate", plant.death_rate},
                {"yield", plant.yield},
                {"volume", plant.volume},
                {"mu_max_contois", plant.mu_max_contois},
                {"contois_b", plant.contois_b},
                {"mu_max_monod", plant.mu_max_monod},
                {"k_s", plant.k_s},
                {"sigma_w", vec2_json(plant.sigma_w)},
                {"mismatch_k_s", plant.mismatch_k_s},
                {"mismatch_mu_max", plant.mismatch_mu_max}};
  j["simulation"] = {{"dt", mpc.dt},
                     {"x0", vec2_json(sim.x0.vec())},
                     {"s_f_base", sim.s_f_base},
                     {"s_f_amplitude", sim.s_f_amplitude}};
  j["mpc"] = {{"horizon", mpc.horizon},
              {"q_state", vec2_json(mpc.q_state)},
              {"q_terminal", vec2_json(mpc.q_terminal)},
              {"r_input", mpc.r_input},
              {"r_move", mpc.r_move},
              {"x_ref", vec2_json(mpc.x_ref)},
              {"u_ref", mpc.u_ref},
              {"input_min", mpc.input_min},
              {"input_max", mpc.input_max},
              {"solver_tol", mpc.solver.tol},
              {"solver_max_iter", mpc.solver.max_iter}};
  j["smpc"] = {{"horizon", smpc.base.horizon},
               {"chance_probability", smpc.chance.probability}};
  j["band"] = {{"activation_time", band.activation_time},
               {"half_width", band.half_width}};
  j["data"] = {{"episodes", data.episodes},
               {"t_sim_days", data.t_sim_days},
               {"trim_days", data.trim_days},
               {"target_points", data.target_points},
               {"split_ratio", data.split_ratio},
               {"ref_jitter", data.ref_jitter},
               {"sparsify_threshold", data.sparsify_threshold},
               {"base_seed", data.base_seed},
               {"split_seed", data.split_seed}};
  j["gp"] = {{"noise_variance", vec2_json(gp.noise_variance)},
             {"restarts", gp.restarts},
             {"max_iters", gp.max_iters},
             {"seed", gp.seed}};
  j["bnn"] = {{"hidden_units", bnn.hidden_units},
              {"epochs", bnn.epochs},
              {"weight_prior_alpha", bnn.weight_prior_alpha},
              {"weight_prior_beta", bnn.weight_prior_beta},
              {"noise_prior_alpha", vec2_json(bnn.noise_prior_alpha)},
              {"noise_prior_beta", vec2_json(bnn.noise_prior_beta)},
              {"seed", bnn.seed}};
  j["open_loop"] = {{"t_total_days", open_loop.t_total_days},
                    {"step_time", open_loop.step_time},
                    {"flow_before", open_loop.flow_before},
                    {"flow_after", open_loop.flow_after},
                    {"window_days", open_loop.window_days}};
  j["closed_loop"] = {{"t_sim_days", closed_loop.t_sim_days},
                      {"seeds", closed_loop.seeds}};
  j["benchmark"] = {{"gp_sizes", benchmark.gp_sizes},
                    {"episode_days", benchmark.episode_days},
                    {"repeats", benchmark.repeats},
                    {"seed", benchmark.seed}};
  j["metrics"] = {{"calibration_levels", metrics.calibration_levels},
                  {"heatmap_grid", metrics.heatmap_grid}};
  return j.dump(2) + "\n";
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a64(to_json()); }

void ExperimentConfig::validate() const {
  plant.validate();
  mpc.validate();
  smpc.validate();
  auto positive = [](double v, const char* what) {
    if (!(v > 0)) {
      throw std::invalid_argument(std::string("config: ") + what +
                                  " must be positive");
    }
  };
  if (data.episodes < 1) throw std::invalid_argument("config: data.episodes must be >= 1");
  positive(data.t_sim_days, "data.t_sim_days");
  if (data.trim_days < 0 || data.trim_days >= data.t_sim_days) {
    throw std::invalid_argument("config: data.trim_days out of range");
  }
  if (data.target_points < 2) throw std::invalid_argument("config: data.target_points too small");
  if (!(data.split_ratio > 0 && data.split_ratio < 1)) {
    throw std::invalid_argument("config: data.split_ratio must be in (0,1)");
  }
  if (data.ref_jitter < 0 || data.ref_jitter >= 1) {
    throw std::invalid_argument("config: data.ref_jitter out of range");
  }
  positive(data.sparsify_threshold, "data.sparsify_threshold");
  positive(gp.noise_variance[0], "gp.noise_variance[0]");
  positive(gp.noise_variance[1], "gp.noise_variance[1]");
  if (gp.restarts < 0) throw std::invalid_argument("config: gp.restarts must be >= 0");
  if (gp.max_iters < 1) throw std::invalid_argument("config: gp.max_iters must be >= 1");
  if (bnn.hidden_units < 1) throw std::invalid_argument("config: bnn.hidden_units must be >= 1");
  if (bnn.epochs < 1) throw std::invalid_argument("config: bnn.epochs must be >= 1");
  positive(bnn.weight_prior_alpha, "bnn.weight_prior_alpha");
  positive(bnn.weight_prior_beta, "bnn.weight_prior_beta");
  for (int i = 0; i < 2; ++i) {
    positive(bnn.noise_prior_alpha[i], "bnn.noise_prior_alpha");
    positive(bnn.noise_prior_beta[i], "bnn.noise_prior_beta");
  }
  positive(open_loop.t_total_days, "open_loop.t_total_days");
  if (open_loop.step_time < 0 || open_loop.step_time >= open_loop.t_total_days) {
    throw std::invalid_argument("config: open_loop.step_time out of range");
  }
  positive(open_loop.window_days, "open_loop.window_days");
  positive(closed_loop.t_sim_days, "closed_loop.t_sim_days");
  if (closed_loop.seeds.empty()) {
    throw std::invalid_argument("config: closed_loop.seeds must be non-empty");
  }
  if (benchmark.gp_sizes.empty()) {
    throw std::invalid_argument("config: benchmark.gp_sizes must be non-empty");
  }
  for (int s : benchmark.gp_sizes) {
    if (s < 2) throw std::invalid_argument("config: benchmark.gp_sizes entries must be >= 2");
  }
  positive(benchmark.episode_days, "benchmark.episode_days");
  if (benchmark.repeats < 1) throw std::invalid_argument("config: benchmark.repeats must be >= 1");
  if (metrics.calibration_levels < 2) {
    throw std::invalid_argument("config: metrics.calibration_levels must be >= 2");
  }
  if (metrics.heatmap_grid < 2) {
    throw std::invalid_argument("config: metrics.heatmap_grid must be >= 2");
  }
}

MpcConfig ExperimentConfig::nominal_config(bool with_band) const {
  MpcConfig c = mpc;
  if (with_band) {
    c.band = band;
  } else {
    c.band.reset();
  }
  return c;
}

SmpcConfig ExperimentConfig::smpc_config(double chance_probability) const {
  SmpcConfig s = smpc;
  s.chance.probability = chance_probability;
  s.base.band = band;
  return s;
}

}  // namespace lsmpc
