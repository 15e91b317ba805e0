#include "masd/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace masd {
namespace {

void apply_activation(RealMatrix& m, Activation act) {
  switch (act) {
    case Activation::kIdentity:
      break;
    case Activation::kTanh:
      m = m.array().tanh();
      break;
    case Activation::kRelu:
      m = m.array().max(0.0);
      break;
  }
}

// Multiplies `grad` in place by the activation derivative, expressed through
// the post-activation output.
void activation_backward(RealMatrix& grad, const RealMatrix& out, Activation act) {
  switch (act) {
    case Activation::kIdentity:
      break;
    case Activation::kTanh:
      grad.array() *= 1.0 - out.array().square();
      break;
    case Activation::kRelu:
      grad.array() *= (out.array() > 0.0).cast<double>();
      break;
  }
}

Activation output_as_activation(OutputActivation out) {
  return out == OutputActivation::kTanh ? Activation::kTanh : Activation::kIdentity;
}

}  // namespace

void MlpSpec::validate() const {
  if (layer_sizes.size() < 2) throw std::invalid_argument("MlpSpec: need at least two layers");
  for (std::size_t s : layer_sizes) {
    if (s == 0) throw std::invalid_argument("MlpSpec: layer size must be positive");
  }
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

bool MlpParams::all_finite() const {
  return std::all_of(layers.begin(), layers.end(), [](const DenseLayer& l) {
    return l.weight.allFinite() && l.bias.allFinite();
  });
}

ParamTensors zeros_like(const MlpParams& params) {
  ParamTensors out;
  out.reserve(params.layers.size());
  for (const auto& l : params.layers) {
    out.push_back({RealMatrix::Zero(l.weight.rows(), l.weight.cols()),
                   RowVector::Zero(l.bias.size())});
  }
  return out;
}

MlpParams mlp_init(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  MlpParams params{spec, {}};
  for (std::size_t i = 0; i + 1 < spec.layer_sizes.size(); ++i) {
    const auto fan_in = spec.layer_sizes[i];
    const auto fan_out = spec.layer_sizes[i + 1];
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    DenseLayer layer{RealMatrix(fan_in, fan_out), RowVector::Zero(fan_out)};
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
        layer.weight(r, c) = rng.uniform(-bound, bound);
      }
    }
    params.layers.push_back(std::move(layer));
  }
  return params;
}

RealMatrix mlp_forward(const MlpParams& params, const RealMatrix& input, MlpCache* cache) {
  if (static_cast<std::size_t>(input.cols()) != params.spec.input_size()) {
    throw std::invalid_argument("mlp_forward: input has " + std::to_string(input.cols()) +
                                " columns, network expects " +
                                std::to_string(params.spec.input_size()));
  }
  if (cache) {
    cache->layer_inputs.clear();
    cache->layer_outputs.clear();
  }
  RealMatrix x = input;
  const std::size_t n = params.layers.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& layer = params.layers[i];
    RealMatrix y = x * layer.weight;
    y.rowwise() += layer.bias;
    apply_activation(y, i + 1 == n ? output_as_activation(params.spec.output_activation)
                                   : params.spec.hidden_activation);
    if (cache) cache->layer_inputs.push_back(std::move(x));
    x = std::move(y);
    if (cache) cache->layer_outputs.push_back(x);
  }
  return x;
}

MlpGradients mlp_backward(const MlpParams& params, const MlpCache& cache,
                          const RealMatrix& upstream) {
  const std::size_t n = params.layers.size();
  if (cache.layer_inputs.size() != n) throw std::invalid_argument("mlp_backward: stale cache");
  const RealMatrix& out = cache.layer_outputs.back();
  if (upstream.rows() != out.rows() || upstream.cols() != out.cols()) {
    throw std::invalid_argument("mlp_backward: upstream shape does not match output");
  }
  MlpGradients grads;
  grads.layers.resize(n);
  RealMatrix delta = upstream;
  for (std::size_t k = n; k-- > 0;) {
    activation_backward(delta, cache.layer_outputs[k],
                        k + 1 == n ? output_as_activation(params.spec.output_activation)
                                   : params.spec.hidden_activation);
    grads.layers[k].weight.noalias() = cache.layer_inputs[k].transpose() * delta;
    grads.layers[k].bias = delta.colwise().sum();
    RealMatrix next = delta * params.layers[k].weight.transpose();
    delta = std::move(next);
  }
  grads.input = std::move(delta);
  return grads;
}

AdamState adam_init(const MlpParams& params, double lr) {
  AdamState s;
  s.lr = lr;
  s.m = zeros_like(params);
  s.v = zeros_like(params);
  return s;
}

void adam_step(MlpParams& params, const ParamTensors& grads, AdamState& state) {
  if (grads.size() != params.layers.size() || state.m.size() != params.layers.size()) {
    throw std::invalid_argument("adam_step: shape mismatch");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    p.array() -= state.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
  };
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto& layer = params.layers[i];
    if (grads[i].weight.rows() != layer.weight.rows() ||
        grads[i].weight.cols() != layer.weight.cols()) {
      throw std::invalid_argument("adam_step: gradient shape mismatch");
    }
    update(layer.weight, grads[i].weight, state.m[i].weight, state.v[i].weight);
    update(layer.bias, grads[i].bias, state.m[i].bias, state.v[i].bias);
  }
}

double clip_grad_norm(ParamTensors& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) sq += g.weight.squaredNorm() + g.bias.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& g : grads) {
      g.weight *= scale;
      g.bias *= scale;
    }
  }
  return norm;
}

void soft_update(MlpParams& target, const MlpParams& online, double tau) {
  if (tau < 0.0 || tau > 1.0) throw std::invalid_argument("soft_update: tau outside [0, 1]");
  if (target.layers.size() != online.layers.size()) {
    throw std::invalid_argument("soft_update: shape mismatch");
  }
  for (std::size_t i = 0; i < target.layers.size(); ++i) {
    auto& t = target.layers[i];
    const auto& o = online.layers[i];
    t.weight = (1.0 - tau) * t.weight + tau * o.weight;
    t.bias = (1.0 - tau) * t.bias + tau * o.bias;
  }
}

double categorical_logprob(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) throw std::out_of_range("categorical_logprob: label out of range");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - mx);
  return logits[label] - mx - std::log(sum);
}

double continuous_logprob(std::span<const double> prediction, std::span<const double> z,
                          ContinuousLoss kind) {
  if (prediction.size() != z.size()) {
    throw std::invalid_argument("continuous_logprob: dimension mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double d = prediction[i] - z[i];
    acc += kind == ContinuousLoss::kL1 ? std::abs(d) : d * d;
  }
  return -acc;
}

RealMatrix log_softmax_rows(const RealMatrix& logits, std::size_t active) {
  const auto k = static_cast<std::size_t>(logits.cols());
  if (active == 0 || active > k) throw std::invalid_argument("log_softmax_rows: bad active count");
  RealMatrix out(logits.rows(), logits.cols());
  const auto a = static_cast<Eigen::Index>(active);
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r).head(a);
    const double mx = row.maxCoeff();
    const double lse = mx + std::log((row.array() - mx).exp().sum());
    out.row(r).head(a) = row.array() - lse;
    out.row(r).tail(logits.cols() - a).setConstant(-std::numeric_limits<double>::infinity());
  }
  return out;
}

double cross_entropy(const RealMatrix& logits, std::span<const int> labels, std::size_t active,
                     RealMatrix* grad) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size() || labels.empty()) {
    throw std::invalid_argument("cross_entropy: batch/label mismatch");
  }
  const RealMatrix lp = log_softmax_rows(logits, active);
  const double inv_b = 1.0 / static_cast<double>(labels.size());
  double loss = 0.0;
  if (grad) grad->setZero(logits.rows(), logits.cols());
  const auto a = static_cast<Eigen::Index>(active);
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= a) throw std::out_of_range("cross_entropy: label outside active classes");
    loss -= lp(r, y);
    if (grad) {
      grad->row(r).head(a) = lp.row(r).head(a).array().exp() * inv_b;
      (*grad)(r, y) -= inv_b;
    }
  }
  return loss * inv_b;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace masd
