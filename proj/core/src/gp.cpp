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

#include "lsmpc/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "json_util.hpp"
#include "lsmpc/csv.hpp"
#include "lsmpc/stats.hpp"

namespace lsmpc {
namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

void check_hyper(const GpHyper& hyper) {
  if (hyper.length_scales.size() == 0) {
    throw std::invalid_argument("GP needs at least one length scale");
  }
  for (int d = 0; d < hyper.length_scales.size(); ++d) {
    if (!(hyper.length_scales[d] > 0.0)) {
      throw std::invalid_argument("GP length scales must be positive");
    }
  }
  if (!(hyper.signal_variance > 0.0)) {
    throw std::invalid_argument("GP signal variance must be positive");
  }
  if (!(hyper.noise_variance >= 0.0)) {
    throw std::invalid_argument("GP noise variance must be nonnegative");
  }
}

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& inputs,
                              const GpHyper& hyper) {
  const int n = static_cast<int>(inputs.rows());
  Eigen::MatrixXd k(n, n);
  for (int i = 0; i < n; ++i) {
    k(i, i) = hyper.signal_variance;
    for (int j = 0; j < i; ++j) {
      const double v =
          kernel_se_ard(inputs.row(i).transpose(), inputs.row(j).transpose(), hyper);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

// Cholesky with an escalating diagonal jitter; the ladder tops out at 1e-6
// relative to the average diagonal before we give up.
Eigen::LLT<Eigen::MatrixXd> chol_with_jitter(const Eigen::MatrixXd& k,
                                             double* jitter_used = nullptr) {
  const double scale = k.diagonal().mean();
  double jitter = 0.0;
  for (int attempt = 0; attempt < 6; ++attempt) {
    Eigen::MatrixXd shifted = k;
    if (jitter > 0.0) {
      shifted.diagonal().array() += jitter * scale;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(shifted);
    if (llt.info() == Eigen::Success) {
      if (jitter_used) *jitter_used = jitter * scale;
      return llt;
    }
    jitter = (jitter == 0.0) ? 1e-10 : jitter * 10.0;
  }
  throw std::runtime_error("GP kernel matrix is not positive definite even with jitter");
}

}  // namespace

double kernel_se_ard(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                     const GpHyper& hyper) {
  if (a.size() != hyper.length_scales.size() || b.size() != a.size()) {
    throw std::invalid_argument("kernel input dimension mismatch");
  }
  double q = 0.0;
  for (int d = 0; d < a.size(); ++d) {
    const double r = (a[d] - b[d]) / hyper.length_scales[d];
    q += r * r;
  }
  return hyper.signal_variance * std::exp(-0.5 * q);
}

double gp_nlml(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
               const GpHyper& hyper, Eigen::VectorXd* grad) {
  check_hyper(hyper);
  const int n = static_cast<int>(inputs.rows());
  if (targets.size() != n || n == 0) {
    throw std::invalid_argument("GP inputs/targets size mismatch");
  }
  if (inputs.cols() != hyper.length_scales.size()) {
    throw std::invalid_argument("GP input dimension mismatch");
  }
  Eigen::MatrixXd kse = kernel_matrix(inputs, hyper);
  Eigen::MatrixXd kn = kse;
  kn.diagonal().array() += hyper.noise_variance;
  auto llt = chol_with_jitter(kn);
  Eigen::VectorXd alpha = llt.solve(targets);
  const Eigen::MatrixXd& l = llt.matrixLLT();
  double logdet_half = 0.0;
  for (int i = 0; i < n; ++i) logdet_half += std::log(l(i, i));
  const double nlml =
      0.5 * targets.dot(alpha) + logdet_half + 0.5 * n * std::log(kTwoPi);
  if (grad) {
    const int dims = static_cast<int>(inputs.cols());
    Eigen::MatrixXd w =
        llt.solve(Eigen::MatrixXd::Identity(n, n)) - alpha * alpha.transpose();
    grad->resize(dims + 1);
    for (int d = 0; d < dims; ++d) {
      // d k / d log ell_d = k_se .* (delta_d^2 / ell_d^2)
      double acc = 0.0;
      const double inv_l2 =
          1.0 / (hyper.length_scales[d] * hyper.length_scales[d]);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          const double delta = inputs(i, d) - inputs(j, d);
          acc += w(i, j) * kse(i, j) * delta * delta * inv_l2;
        }
      }
      (*grad)[d] = 0.5 * acc;
    }
    // d k / d log sigma_f^2 = k_se
    (*grad)[dims] = 0.5 * w.cwiseProduct(kse).sum();
  }
  return nlml;
}

GpModel::GpModel(Eigen::MatrixXd inputs, Eigen::VectorXd targets, GpHyper hyper)
    : inputs_(std::move(inputs)), targets_(std::move(targets)), hyper_(std::move(hyper)) {
  check_hyper(hyper_);
  const int n = static_cast<int>(inputs_.rows());
  if (targets_.size() != n || n == 0) {
    throw std::invalid_argument("GP inputs/targets size mismatch");
  }
  Eigen::MatrixXd kn = kernel_matrix(inputs_, hyper_);
  kn.diagonal().array() += hyper_.noise_variance;
  auto llt = chol_with_jitter(kn);
  chol_ = llt.matrixL();
  alpha_ = llt.solve(targets_);
  double logdet_half = 0.0;
  for (int i = 0; i < n; ++i) logdet_half += std::log(chol_(i, i));
  nlml_ = 0.5 * targets_.dot(alpha_) + logdet_half + 0.5 * n * std::log(kTwoPi);
}

GpModel::Prediction GpModel::predict(const Eigen::VectorXd& x) const {
  const int n = static_cast<int>(inputs_.rows());
  Eigen::VectorXd kstar(n);
  for (int i = 0; i < n; ++i) {
    kstar[i] = kernel_se_ard(x, inputs_.row(i).transpose(), hyper_);
  }
  Prediction out;
  out.mean = kstar.dot(alpha_);
  // Latent-function variance only; solving with the Cholesky factor keeps the
  // quadratic form nonnegative up to roundoff.
  Eigen::VectorXd v = chol_.triangularView<Eigen::Lower>().solve(kstar);
  out.variance = std::max(hyper_.signal_variance - v.squaredNorm(), 1e-12);
  return out;
}

Eigen::VectorXd GpModel::mean_gradient(const Eigen::VectorXd& x) const {
  const int n = static_cast<int>(inputs_.rows());
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(x.size());
  for (int i = 0; i < n; ++i) {
    const double k = kernel_se_ard(x, inputs_.row(i).transpose(), hyper_);
    for (int d = 0; d < x.size(); ++d) {
      const double inv_l2 =
          1.0 / (hyper_.length_scales[d] * hyper_.length_scales[d]);
      grad[d] += alpha_[i] * k * (inputs_(i, d) - x[d]) * inv_l2;
    }
  }
  return grad;
}

namespace {

nlohmann::json gp_to_json_obj(const GpModel& model) {
  nlohmann::json j;
  j["length_scales"] = jsonutil::from_vector(model.hyper().length_scales);
  j["signal_variance"] = model.hyper().signal_variance;
  j["noise_variance"] = model.hyper().noise_variance;
  j["inputs"] = jsonutil::from_matrix(model.inputs());
  j["targets"] = jsonutil::from_vector(model.targets());
  j["alpha"] = jsonutil::from_vector(model.alpha());
  j["chol_lower"] = jsonutil::from_matrix(model.chol_lower());
  return j;
}

GpModel gp_from_json_obj(const nlohmann::json& j) {
  GpHyper hyper;
  hyper.length_scales = jsonutil::to_vector(jsonutil::field(j, "length_scales"));
  hyper.signal_variance = jsonutil::field(j, "signal_variance").get<double>();
  hyper.noise_variance = jsonutil::field(j, "noise_variance").get<double>();
  Eigen::MatrixXd inputs = jsonutil::to_matrix(jsonutil::field(j, "inputs"));
  Eigen::VectorXd targets = jsonutil::to_vector(jsonutil::field(j, "targets"));
  // alpha and chol_lower are stored for external consumers; the factorization
  // is rebuilt from the raw data on load.
  return GpModel(std::move(inputs), std::move(targets), std::move(hyper));
}

}  // namespace

std::string GpModel::to_json() const { return gp_to_json_obj(*this).dump(2); }

GpModel GpModel::from_json(const std::string& text) {
  return gp_from_json_obj(nlohmann::json::parse(text));
}

GpModel train_gp(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                 double noise_variance, const GpTrainOptions& options,
                 GpTrainReport* report) {
  const int dims = static_cast<int>(inputs.cols());
  const int nparam = dims + 1;  // log length scales plus log signal variance
  Rng rng(options.seed);

  std::vector<Eigen::VectorXd> starts;
  starts.push_back(Eigen::VectorXd::Zero(nparam));
  for (int r = 0; r < options.restarts; ++r) {
    Eigen::VectorXd theta(nparam);
    for (int i = 0; i < nparam; ++i) {
      theta[i] = options.log_min +
                 (options.log_max - options.log_min) * rng.uniform();
    }
    starts.push_back(theta);
  }

  auto make_hyper = [&](const Eigen::VectorXd& theta) {
    GpHyper hyper;
    hyper.length_scales = theta.head(dims).array().exp();
    hyper.signal_variance = std::exp(theta[dims]);
    hyper.noise_variance = noise_variance;
    return hyper;
  };
  auto eval = [&](const Eigen::VectorXd& theta, Eigen::VectorXd* grad) {
    try {
      return gp_nlml(inputs, targets, make_hyper(theta), grad);
    } catch (const std::runtime_error&) {
      if (grad) grad->setZero(nparam);
      return std::numeric_limits<double>::infinity();
    }
  };

  Eigen::VectorXd best_theta = starts.front();
  double best_value = std::numeric_limits<double>::infinity();
  if (report) {
    report->initial_nlml.clear();
    report->final_nlml.clear();
  }

  for (size_t s = 0; s < starts.size(); ++s) {
    Eigen::VectorXd theta = starts[s];
    Eigen::VectorXd grad(nparam);
    double value = eval(theta, &grad);
    if (report) report->initial_nlml.push_back(value);

    // Sign-based step adaptation: grow the per-coordinate step while the
    // gradient sign holds, halve it on a sign flip.
    Eigen::VectorXd step = Eigen::VectorXd::Constant(nparam, 0.1);
    Eigen::VectorXd prev_grad = Eigen::VectorXd::Zero(nparam);
    Eigen::VectorXd local_best_theta = theta;
    double local_best = value;

    for (int iter = 0; iter < options.max_iters; ++iter) {
      if (!std::isfinite(value)) break;
      if (grad.lpNorm<Eigen::Infinity>() < 1e-8) break;
      for (int i = 0; i < nparam; ++i) {
        const double sign_now = (grad[i] > 0.0) - (grad[i] < 0.0);
        if (grad[i] * prev_grad[i] > 0.0) {
          step[i] = std::min(step[i] * 1.2, 1.0);
        } else if (grad[i] * prev_grad[i] < 0.0) {
          step[i] = std::max(step[i] * 0.5, 1e-7);
        }
        theta[i] -= sign_now * step[i];
        theta[i] = std::clamp(theta[i], -10.0, 10.0);
      }
      prev_grad = grad;
      value = eval(theta, &grad);
      if (value < local_best) {
        local_best = value;
        local_best_theta = theta;
      }
      if (step.maxCoeff() < 1e-8) break;
    }

    if (report) report->final_nlml.push_back(local_best);
    if (local_best < best_value) {
      best_value = local_best;
      best_theta = local_best_theta;
      if (report) report->best_start = static_cast<int>(s);
    }
  }

  if (!std::isfinite(best_value)) {
    throw std::runtime_error("GP training failed: no start produced a finite objective");
  }
  if (report) report->best_nlml = best_value;
  return GpModel(inputs, targets, make_hyper(best_theta));
}

GpResidualModel::GpResidualModel(GpModel biomass_channel, GpModel substrate_channel,
                                 Scaler feature_scaler, Scaler label_scaler)
    : feature_scaler_(std::move(feature_scaler)), label_scaler_(std::move(label_scaler)) {
  channels_.push_back(std::move(biomass_channel));
  channels_.push_back(std::move(substrate_channel));
  if (feature_scaler_.dims() != 2 || label_scaler_.dims() != 2) {
    throw std::invalid_argument("residual model scalers must be two-dimensional");
  }
}

ResidualPrediction GpResidualModel::predict(const Eigen::Vector2d& state) const {
  const Eigen::VectorXd features = feature_scaler_.apply(state);
  ResidualPrediction out;
  for (int i = 0; i < 2; ++i) {
    const auto p = channels_[i].predict(features);
    const double sd = label_scaler_.std()[i];
    out.mean[i] = label_scaler_.invert(i, p.mean);
    out.variance[i] = p.variance * sd * sd;
  }
  return out;
}

Eigen::Matrix2d GpResidualModel::mean_jacobian(const Eigen::Vector2d& state) const {
  const Eigen::VectorXd features = feature_scaler_.apply(state);
  Eigen::Matrix2d jac;
  for (int i = 0; i < 2; ++i) {
    const Eigen::VectorXd g = channels_[i].mean_gradient(features);
    for (int j = 0; j < 2; ++j) {
      jac(i, j) = g[j] * label_scaler_.std()[i] / feature_scaler_.std()[j];
    }
  }
  return jac;
}

const GpModel& GpResidualModel::channel(int i) const { return channels_.at(i); }

void GpResidualModel::save(const std::string& path) const {
  nlohmann::json j;
  j["kind"] = "gp";
  j["feature_scaler"] = jsonutil::from_scaler(feature_scaler_);
  j["label_scaler"] = jsonutil::from_scaler(label_scaler_);
  j["channels"] = {gp_to_json_obj(channels_[0]), gp_to_json_obj(channels_[1])};
  write_text_file(path, j.dump(2));
}

std::unique_ptr<GpResidualModel> GpResidualModel::load(const std::string& path) {
  const nlohmann::json j = nlohmann::json::parse(read_text_file(path));
  if (jsonutil::field(j, "kind").get<std::string>() != "gp") {
    throw std::invalid_argument("model file is not a GP residual model: " + path);
  }
  const auto& channels = jsonutil::field(j, "channels");
  if (channels.size() != 2) {
    throw std::invalid_argument("GP residual model needs exactly two channels");
  }
  return std::make_unique<GpResidualModel>(
      gp_from_json_obj(channels.at(0)), gp_from_json_obj(channels.at(1)),
      jsonutil::to_scaler(jsonutil::field(j, "feature_scaler")),
      jsonutil::to_scaler(jsonutil::field(j, "label_scaler")));
}

}  // namespace lsmpc
