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

#include "lsmpc/bnn.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "json_util.hpp"
#include "lsmpc/csv.hpp"

namespace lsmpc {
namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kDegenerateVar = 1e-14;

double log_normal_pdf(double x, double mean, double var) {
  const double r = x - mean;
  return -0.5 * std::log(kTwoPi * var) - 0.5 * r * r / var;
}

// Per-layer quantities of one moment-matching forward pass, kept for the
// backward sweep of an ADF update.
struct LayerCache {
  Eigen::VectorXd in_mean, in_var;    // layer input (post-activation below)
  Eigen::VectorXd lin_mean, lin_var;  // linear-map output
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  double out_mean = 0.0;
  double out_var = 0.0;
};

ForwardCache forward_pass(const std::vector<LayerBelief>& layers,
                          const Eigen::VectorXd& x) {
  ForwardCache cache;
  Eigen::VectorXd mu = x;
  Eigen::VectorXd var = Eigen::VectorXd::Zero(x.size());
  for (size_t l = 0; l < layers.size(); ++l) {
    const LayerBelief& layer = layers[l];
    LayerCache lc;
    lc.in_mean = mu;
    lc.in_var = var;
    const auto rows = layer.weight_mean.rows();
    Eigen::VectorXd amu(rows), avar(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
      double m_acc = layer.bias_mean[i];
      double v_acc = layer.bias_var[i];
      for (Eigen::Index j = 0; j < layer.weight_mean.cols(); ++j) {
        const double wm = layer.weight_mean(i, j);
        const double wv = layer.weight_var(i, j);
        m_acc += wm * mu[j];
        v_acc += wv * (mu[j] * mu[j] + var[j]) + wm * wm * var[j];
      }
      amu[i] = m_acc;
      avar[i] = v_acc;
    }
    lc.lin_mean = amu;
    lc.lin_var = avar;
    cache.layers.push_back(std::move(lc));
    if (l + 1 < layers.size()) {
      mu.resize(rows);
      var.resize(rows);
      for (Eigen::Index i = 0; i < rows; ++i) {
        const auto rm = relu_moments(amu[i], avar[i]);
        mu[i] = rm.mean;
        var[i] = rm.variance;
      }
    } else {
      cache.out_mean = amu[0];
      cache.out_var = avar[0];
    }
  }
  return cache;
}

// Gradients of a scalar log normalizer with respect to every belief mean and
// variance, plus nothing else; mirrors forward_pass layer by layer.
struct LayerGrad {
  Eigen::MatrixXd weight_mean, weight_var;
  Eigen::VectorXd bias_mean, bias_var;
};

std::vector<LayerGrad> backward_pass(const std::vector<LayerBelief>& layers,
                                     const ForwardCache& cache,
                                     double dlogz_dmean, double dlogz_dvar) {
  std::vector<LayerGrad> grads(layers.size());
  Eigen::VectorXd gmu(1), gvar(1);
  gmu[0] = dlogz_dmean;
  gvar[0] = dlogz_dvar;
  for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
    const LayerBelief& layer = layers[l];
    const LayerCache& lc = cache.layers[l];
    const auto rows = layer.weight_mean.rows();
    const auto cols = layer.weight_mean.cols();

    // gmu/gvar currently refer to this layer's post-activation outputs; pull
    // them back through the rectifier for every hidden layer.
    Eigen::VectorXd ga_mu(rows), ga_var(rows);
    if (l + 1 < static_cast<int>(layers.size())) {
      for (Eigen::Index i = 0; i < rows; ++i) {
        const double am = lc.lin_mean[i];
        const double av = lc.lin_var[i];
        if (av < kDegenerateVar) {
          const double step = am > 0.0 ? 1.0 : 0.0;
          ga_mu[i] = gmu[i] * step;
          ga_var[i] = gvar[i] * step;
          continue;
        }
        const double sigma = std::sqrt(av);
        const double a = am / sigma;
        const double cdf = normal_cdf(a);
        const double pdf = normal_pdf(a);
        const double e = am * cdf + sigma * pdf;
        ga_mu[i] = gmu[i] * cdf + gvar[i] * 2.0 * e * (1.0 - cdf);
        ga_var[i] = gmu[i] * pdf / (2.0 * sigma) +
                    gvar[i] * (cdf - e * pdf / sigma);
      }
    } else {
      ga_mu = gmu;
      ga_var = gvar;
    }

    LayerGrad& g = grads[l];
    g.weight_mean.resize(rows, cols);
    g.weight_var.resize(rows, cols);
    g.bias_mean = ga_mu;
    g.bias_var = ga_var;
    Eigen::VectorXd gin_mu = Eigen::VectorXd::Zero(cols);
    Eigen::VectorXd gin_var = Eigen::VectorXd::Zero(cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) {
        const double zm = lc.in_mean[j];
        const double zv = lc.in_var[j];
        const double wm = layer.weight_mean(i, j);
        const double wv = layer.weight_var(i, j);
        g.weight_mean(i, j) = ga_mu[i] * zm + ga_var[i] * 2.0 * wm * zv;
        g.weight_var(i, j) = ga_var[i] * (zm * zm + zv);
        gin_mu[j] += ga_mu[i] * wm + ga_var[i] * 2.0 * wv * zm;
        gin_var[j] += ga_var[i] * (wv + wm * wm);
      }
    }
    gmu = std::move(gin_mu);
    gvar = std::move(gin_var);
  }
  return grads;
}

}  // namespace

double GammaBelief::mean_inverse() const {
  if (alpha <= 1.0) {
    throw std::runtime_error(
        "precision belief has alpha <= 1; expected noise is undefined");
  }
  return beta / (alpha - 1.0);
}

RectifiedMoments relu_moments(double mean, double variance) {
  if (variance < 0.0) {
    throw std::invalid_argument("relu_moments needs a nonnegative variance");
  }
  if (variance < kDegenerateVar) {
    return {mean > 0.0 ? mean : 0.0, 0.0};
  }
  const double sigma = std::sqrt(variance);
  const double a = mean / sigma;
  const double cdf = normal_cdf(a);
  const double pdf = normal_pdf(a);
  RectifiedMoments out;
  out.mean = mean * cdf + sigma * pdf;
  const double second = (mean * mean + variance) * cdf + mean * sigma * pdf;
  out.variance = std::max(second - out.mean * out.mean, 0.0);
  return out;
}

bool adf_refine(GaussianBelief& belief, double dlogz_dmean, double dlogz_dvar) {
  const double m = belief.mean + belief.var * dlogz_dmean;
  const double v =
      belief.var -
      belief.var * belief.var * (dlogz_dmean * dlogz_dmean - 2.0 * dlogz_dvar);
  if (!std::isfinite(m) || !std::isfinite(v) || v <= 0.0) return false;
  belief.mean = m;
  belief.var = v;
  return true;
}

bool gamma_refine(GammaBelief& belief, double logz0, double logz1, double logz2) {
  const double r1 = std::exp(logz1 - logz0);
  const double r2 = std::exp(logz2 - logz1);
  const double alpha = belief.alpha;
  const double beta = belief.beta;
  const double inv_alpha = (r2 / r1) * (alpha + 1.0) / alpha - 1.0;
  const double inv_beta = (r2 * (alpha + 1.0) - r1 * alpha) / beta;
  if (!(inv_alpha > 0.0) || !(inv_beta > 0.0) || !std::isfinite(inv_alpha) ||
      !std::isfinite(inv_beta)) {
    return false;
  }
  belief.alpha = 1.0 / inv_alpha;
  belief.beta = belief.alpha / (r1 * alpha / beta);
  return true;
}

BnnModel::BnnModel(const std::vector<int>& layer_sizes,
                   const GammaBelief& weight_prior, const GammaBelief& noise_prior,
                   Rng& rng)
    : sizes_(layer_sizes), weight_belief_(weight_prior), noise_belief_(noise_prior) {
  if (sizes_.size() < 2) {
    throw std::invalid_argument("network needs at least input and output sizes");
  }
  if (sizes_.back() != 1) {
    throw std::invalid_argument("network output must be scalar");
  }
  const double prior_var = weight_prior.beta / weight_prior.alpha;
  for (size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const int fan_in = sizes_[l];
    const int fan_out = sizes_[l + 1];
    const double init_std = 1.0 / std::sqrt(static_cast<double>(fan_in) + 1.0);
    LayerBelief layer;
    layer.weight_mean.resize(fan_out, fan_in);
    layer.weight_var = Eigen::MatrixXd::Constant(fan_out, fan_in, prior_var);
    layer.bias_mean.resize(fan_out);
    layer.bias_var = Eigen::VectorXd::Constant(fan_out, prior_var);
    for (int i = 0; i < fan_out; ++i) {
      for (int j = 0; j < fan_in; ++j) {
        layer.weight_mean(i, j) = init_std * rng.normal();
      }
      layer.bias_mean[i] = init_std * rng.normal();
    }
    layers_.push_back(std::move(layer));
  }
}

BnnModel::BnnModel(std::vector<int> layer_sizes, std::vector<LayerBelief> layers,
                   GammaBelief weight_belief, GammaBelief noise_belief)
    : sizes_(std::move(layer_sizes)),
      layers_(std::move(layers)),
      weight_belief_(weight_belief),
      noise_belief_(noise_belief) {
  if (sizes_.size() != layers_.size() + 1) {
    throw std::invalid_argument("layer count does not match size list");
  }
}

BnnModel::Moments BnnModel::forward_moments(const Eigen::VectorXd& x) const {
  if (x.size() != sizes_.front()) {
    throw std::invalid_argument("network input dimension mismatch");
  }
  const auto cache = forward_pass(layers_, x);
  return {cache.out_mean, cache.out_var};
}

BnnModel::Moments BnnModel::predict(const Eigen::VectorXd& x) const {
  Moments m = forward_moments(x);
  m.variance += noise_belief_.mean_inverse();
  return m;
}

Eigen::VectorXd BnnModel::mean_gradient(const Eigen::VectorXd& x) const {
  const int dims = static_cast<int>(x.size());
  if (dims != sizes_.front()) {
    throw std::invalid_argument("network input dimension mismatch");
  }
  Eigen::VectorXd mu = x;
  Eigen::VectorXd var = Eigen::VectorXd::Zero(dims);
  // Forward-mode Jacobians of the unit means and variances w.r.t. the input.
  Eigen::MatrixXd jmu = Eigen::MatrixXd::Identity(dims, dims);
  Eigen::MatrixXd jvar = Eigen::MatrixXd::Zero(dims, dims);
  for (size_t l = 0; l < layers_.size(); ++l) {
    const LayerBelief& layer = layers_[l];
    const auto rows = layer.weight_mean.rows();
    Eigen::VectorXd amu(rows), avar(rows);
    Eigen::MatrixXd jamu(rows, dims), javar(rows, dims);
    for (Eigen::Index i = 0; i < rows; ++i) {
      double m_acc = layer.bias_mean[i];
      double v_acc = layer.bias_var[i];
      Eigen::RowVectorXd jm = Eigen::RowVectorXd::Zero(dims);
      Eigen::RowVectorXd jv = Eigen::RowVectorXd::Zero(dims);
      for (Eigen::Index j = 0; j < layer.weight_mean.cols(); ++j) {
        const double wm = layer.weight_mean(i, j);
        const double wv = layer.weight_var(i, j);
        m_acc += wm * mu[j];
        v_acc += wv * (mu[j] * mu[j] + var[j]) + wm * wm * var[j];
        jm += wm * jmu.row(j);
        jv += wv * (2.0 * mu[j] * jmu.row(j) + jvar.row(j)) +
              wm * wm * jvar.row(j);
      }
      amu[i] = m_acc;
      avar[i] = v_acc;
      jamu.row(i) = jm;
      javar.row(i) = jv;
    }
    if (l + 1 < layers_.size()) {
      mu.resize(rows);
      var.resize(rows);
      jmu.resize(rows, dims);
      jvar.resize(rows, dims);
      for (Eigen::Index i = 0; i < rows; ++i) {
        if (avar[i] < kDegenerateVar) {
          const double step = amu[i] > 0.0 ? 1.0 : 0.0;
          mu[i] = step * amu[i];
          var[i] = 0.0;
          jmu.row(i) = step * jamu.row(i);
          jvar.row(i).setZero();
          continue;
        }
        const double sigma = std::sqrt(avar[i]);
        const double a = amu[i] / sigma;
        const double cdf = normal_cdf(a);
        const double pdf = normal_pdf(a);
        const double e = amu[i] * cdf + sigma * pdf;
        const auto rm = relu_moments(amu[i], avar[i]);
        mu[i] = rm.mean;
        var[i] = rm.variance;
        jmu.row(i) = cdf * jamu.row(i) + pdf / (2.0 * sigma) * javar.row(i);
        jvar.row(i) = 2.0 * e * (1.0 - cdf) * jamu.row(i) +
                      (cdf - e * pdf / sigma) * javar.row(i);
      }
    } else {
      return jamu.row(0).transpose();
    }
  }
  throw std::logic_error("network has no layers");
}

void BnnModel::adf_update(const Eigen::VectorXd& x, double y) {
  const auto cache = forward_pass(layers_, x);
  const double noise = noise_belief_.mean_inverse();
  const double vtot = cache.out_var + noise;
  if (!(vtot > 0.0)) {
    throw std::runtime_error("nonpositive predictive variance in ADF update");
  }
  const double r = y - cache.out_mean;
  const double dlogz_dmean = r / vtot;
  const double dlogz_dvar = -0.5 / vtot + 0.5 * r * r / (vtot * vtot);

  const auto grads = backward_pass(layers_, cache, dlogz_dmean, dlogz_dvar);
  for (size_t l = 0; l < layers_.size(); ++l) {
    LayerBelief& layer = layers_[l];
    const LayerGrad& g = grads[l];
    for (Eigen::Index i = 0; i < layer.weight_mean.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.weight_mean.cols(); ++j) {
        GaussianBelief b{layer.weight_mean(i, j), layer.weight_var(i, j)};
        ++update_count_;
        if (adf_refine(b, g.weight_mean(i, j), g.weight_var(i, j))) {
          layer.weight_mean(i, j) = b.mean;
          layer.weight_var(i, j) = b.var;
        } else {
          ++skip_count_;
        }
      }
      GaussianBelief b{layer.bias_mean[i], layer.bias_var[i]};
      ++update_count_;
      if (adf_refine(b, g.bias_mean[i], g.bias_var[i])) {
        layer.bias_mean[i] = b.mean;
        layer.bias_var[i] = b.var;
      } else {
        ++skip_count_;
      }
    }
  }

  // Refresh the observation-precision belief from the same forward pass. The
  // three normalizers differ only in the alpha entering the expected noise.
  const double a = noise_belief_.alpha;
  const double b = noise_belief_.beta;
  const double z0 = log_normal_pdf(y, cache.out_mean, cache.out_var + b / (a - 1.0));
  const double z1 = log_normal_pdf(y, cache.out_mean, cache.out_var + b / a);
  const double z2 = log_normal_pdf(y, cache.out_mean, cache.out_var + b / (a + 1.0));
  gamma_refine(noise_belief_, z0, z1, z2);
}

void BnnModel::incorporate_weight_prior() {
  const double a = weight_belief_.alpha;
  const double b = weight_belief_.beta;
  auto refine_one = [&](double& mean, double& var) {
    // Expected factor N(w | 0, beta/(alpha - 1)) against the current belief.
    const double prior_var = b / (a - 1.0);
    const double vtot = var + prior_var;
    const double gm = -mean / vtot;
    const double gv = -0.5 / vtot + 0.5 * mean * mean / (vtot * vtot);
    GaussianBelief belief{mean, var};
    ++update_count_;
    if (adf_refine(belief, gm, gv)) {
      mean = belief.mean;
      var = belief.var;
    } else {
      ++skip_count_;
    }
    const double z0 = log_normal_pdf(0.0, belief.mean, belief.var + b / (a - 1.0));
    const double z1 = log_normal_pdf(0.0, belief.mean, belief.var + b / a);
    const double z2 = log_normal_pdf(0.0, belief.mean, belief.var + b / (a + 1.0));
    gamma_refine(weight_belief_, z0, z1, z2);
  };
  for (LayerBelief& layer : layers_) {
    for (Eigen::Index i = 0; i < layer.weight_mean.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.weight_mean.cols(); ++j) {
        refine_one(layer.weight_mean(i, j), layer.weight_var(i, j));
      }
      refine_one(layer.bias_mean[i], layer.bias_var[i]);
    }
  }
}

std::string BnnModel::to_json() const {
  nlohmann::json j;
  j["sizes"] = sizes_;
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerBelief& layer : layers_) {
    layers.push_back({{"weight_mean", jsonutil::from_matrix(layer.weight_mean)},
                      {"weight_var", jsonutil::from_matrix(layer.weight_var)},
                      {"bias_mean", jsonutil::from_vector(layer.bias_mean)},
                      {"bias_var", jsonutil::from_vector(layer.bias_var)}});
  }
  j["layers"] = std::move(layers);
  j["weight_belief"] = {{"alpha", weight_belief_.alpha}, {"beta", weight_belief_.beta}};
  j["noise_belief"] = {{"alpha", noise_belief_.alpha}, {"beta", noise_belief_.beta}};
  return j.dump(2);
}

namespace {

BnnModel bnn_from_json_obj(const nlohmann::json& j) {
  std::vector<int> sizes = jsonutil::field(j, "sizes").get<std::vector<int>>();
  std::vector<LayerBelief> layers;
  for (const auto& lj : jsonutil::field(j, "layers")) {
    LayerBelief layer;
    layer.weight_mean = jsonutil::to_matrix(jsonutil::field(lj, "weight_mean"));
    layer.weight_var = jsonutil::to_matrix(jsonutil::field(lj, "weight_var"));
    layer.bias_mean = jsonutil::to_vector(jsonutil::field(lj, "bias_mean"));
    layer.bias_var = jsonutil::to_vector(jsonutil::field(lj, "bias_var"));
    layers.push_back(std::move(layer));
  }
  GammaBelief weight{jsonutil::field(j, "weight_belief").at("alpha").get<double>(),
                     jsonutil::field(j, "weight_belief").at("beta").get<double>()};
  GammaBelief noise{jsonutil::field(j, "noise_belief").at("alpha").get<double>(),
                    jsonutil::field(j, "noise_belief").at("beta").get<double>()};
  return BnnModel(std::move(sizes), std::move(layers), weight, noise);
}

}  // namespace

BnnModel BnnModel::from_json(const std::string& text) {
  return bnn_from_json_obj(nlohmann::json::parse(text));
}

BnnModel train_pbp(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                   const PbpOptions& options) {
  const int n = static_cast<int>(inputs.rows());
  if (targets.size() != n || n == 0) {
    throw std::invalid_argument("training inputs/targets size mismatch");
  }
  if (options.layer_sizes.front() != inputs.cols()) {
    throw std::invalid_argument("network input size does not match data");
  }
  Rng rng(options.seed);
  BnnModel model(options.layer_sizes, options.weight_prior, options.noise_prior, rng);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    rng.shuffle(order);
    for (int idx : order) {
      model.adf_update(inputs.row(idx).transpose(), targets[idx]);
    }
    model.incorporate_weight_prior();
  }
  return model;
}

BnnResidualModel::BnnResidualModel(BnnModel biomass_channel, BnnModel substrate_channel,
                                   Scaler feature_scaler, Scaler label_scaler)
    : feature_scaler_(std::move(feature_scaler)), label_scaler_(std::move(label_scaler)) {
  channels_.push_back(std::move(biomass_channel));
  channels_.push_back(std::move(substrate_channel));
  if (feature_scaler_.dims() != 2 || label_scaler_.dims() != 2) {
    throw std::invalid_argument("residual model scalers must be two-dimensional");
  }
}

ResidualPrediction BnnResidualModel::predict(const Eigen::Vector2d& state) const {
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

Eigen::Matrix2d BnnResidualModel::mean_jacobian(const Eigen::Vector2d& state) const {
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

const BnnModel& BnnResidualModel::channel(int i) const { return channels_.at(i); }

void BnnResidualModel::save(const std::string& path) const {
  nlohmann::json j;
  j["kind"] = "bnn";
  j["feature_scaler"] = jsonutil::from_scaler(feature_scaler_);
  j["label_scaler"] = jsonutil::from_scaler(label_scaler_);
  j["channels"] = {nlohmann::json::parse(channels_[0].to_json()),
                   nlohmann::json::parse(channels_[1].to_json())};
  write_text_file(path, j.dump(2));
}

std::unique_ptr<BnnResidualModel> BnnResidualModel::load(const std::string& path) {
  const nlohmann::json j = nlohmann::json::parse(read_text_file(path));
  if (jsonutil::field(j, "kind").get<std::string>() != "bnn") {
    throw std::invalid_argument("model file is not a network residual model: " + path);
  }
  const auto& channels = jsonutil::field(j, "channels");
  if (channels.size() != 2) {
    throw std::invalid_argument("network residual model needs exactly two channels");
  }
  return std::make_unique<BnnResidualModel>(
      bnn_from_json_obj(channels.at(0)), bnn_from_json_obj(channels.at(1)),
      jsonutil::to_scaler(jsonutil::field(j, "feature_scaler")),
      jsonutil::to_scaler(jsonutil::field(j, "label_scaler")));
}

}  // namespace lsmpc
