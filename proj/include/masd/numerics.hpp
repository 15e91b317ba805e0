#pragma once

// Dense feed-forward networks with exact reverse-mode gradients, Adam,
// Polyak averaging and the log-likelihood surrogates used by the
// discriminators. Everything runs in double precision.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "masd/rng.hpp"

namespace masd {

using RealMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

enum class Activation { kIdentity, kTanh, kRelu };

/// Output heads: kSoftmaxLogits is an identity layer whose outputs are
/// consumed as logits by a cross-entropy loss.
enum class OutputActivation { kIdentity, kTanh, kSoftmaxLogits };

struct MlpSpec {
  std::vector<std::size_t> layer_sizes;  // input, hidden..., output
  Activation hidden_activation = Activation::kRelu;
  OutputActivation output_activation = OutputActivation::kIdentity;

  /// Throws std::invalid_argument for fewer than two layers or a zero width.
  void validate() const;
  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t output_size() const { return layer_sizes.back(); }
};

struct DenseLayer {
  RealMatrix weight;  // fan_in x fan_out
  RowVector bias;     // fan_out
};

struct MlpParams {
  MlpSpec spec;
  std::vector<DenseLayer> layers;

  std::size_t parameter_count() const;
  bool all_finite() const;
};

/// Same shape as the parameters; used for gradients and Adam moments.
using ParamTensors = std::vector<DenseLayer>;

ParamTensors zeros_like(const MlpParams& params);

/// Activation record of one forward pass.
struct MlpCache {
  std::vector<RealMatrix> layer_inputs;  // input to each dense layer
  std::vector<RealMatrix> layer_outputs; // post-activation output of each layer
};

struct MlpGradients {
  ParamTensors layers;
  RealMatrix input;  // d loss / d input, same shape as the forward input
};

/// Fan-in scaled uniform weights (bound sqrt(1/fan_in)) and zero biases.
MlpParams mlp_init(const MlpSpec& spec, Rng& rng);

/// Batched forward pass; rows are samples. Fills `cache` when non-null.
RealMatrix mlp_forward(const MlpParams& params, const RealMatrix& input,
                       MlpCache* cache = nullptr);

/// Reverse-mode gradients of the scalar loss whose gradient with respect to
/// the network output is `upstream`.
MlpGradients mlp_backward(const MlpParams& params, const MlpCache& cache,
                          const RealMatrix& upstream);

struct AdamState {
  std::size_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  ParamTensors m;
  ParamTensors v;
};

AdamState adam_init(const MlpParams& params, double lr);

/// Bias-corrected Adam update of `params` in place.
void adam_step(MlpParams& params, const ParamTensors& grads, AdamState& state);

/// Rescales `grads` so its global L2 norm is at most `max_norm`; returns the
/// norm before clipping. max_norm <= 0 disables clipping.
double clip_grad_norm(ParamTensors& grads, double max_norm);

/// target <- (1 - tau) * target + tau * online.
void soft_update(MlpParams& target, const MlpParams& online, double tau);

/// log softmax(logits)[label], computed with max subtraction.
double categorical_logprob(std::span<const double> logits, std::size_t label);

enum class ContinuousLoss { kL1, kL2 };

/// Unnormalized log-density surrogate: -sum|pred - z| (Laplacian) or
/// -sum (pred - z)^2 (Gaussian). Constants are dropped, so these are only
/// meaningful as training losses and relative rewards.
double continuous_logprob(std::span<const double> prediction, std::span<const double> z,
                          ContinuousLoss kind);

/// Mean categorical cross entropy over rows, with classes >= active masked
/// out of the softmax. Writes d loss / d logits into `grad` when non-null.
double cross_entropy(const RealMatrix& logits, std::span<const int> labels, std::size_t active,
                     RealMatrix* grad = nullptr);

/// Row-wise masked log-softmax (inactive columns are set to -inf).
RealMatrix log_softmax_rows(const RealMatrix& logits, std::size_t active);

double sigmoid(double x);

}  // namespace masd
