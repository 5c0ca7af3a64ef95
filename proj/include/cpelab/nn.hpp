#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cpelab/matrix.hpp"

namespace cpelab::nn {

/// Architecture of a fully connected ReLU classifier: input -> hidden layers
/// (ReLU) -> num_classes logits. The softmax of the logits is the categorical
/// likelihood.
struct MlpSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_widths;
  std::size_t num_classes = 0;

  void validate() const;  // throws std::invalid_argument
  std::vector<std::size_t> layer_sizes() const;
  // sum over layers of (fan_in + 1) * fan_out
  std::size_t param_count() const;
};

/// Flat parameter vector theta: per layer, row-major weights (out x in)
/// followed by the bias (out).
using ParamVector = std::vector<double>;
using GradVector = std::vector<double>;

struct LayerWeights {
  Matrix weights;             // out x in
  std::vector<double> bias;   // out
};

/// Draw theta ~ N(0, prior_std^2 I); deterministic given seed.
ParamVector init_params(const MlpSpec& spec, double prior_std, std::uint64_t seed);

std::vector<LayerWeights> unflatten(const MlpSpec& spec, const ParamVector& params);
ParamVector flatten(const MlpSpec& spec, const std::vector<LayerWeights>& layers);

/// Logits for every input row; inputs is n x input_dim.
Matrix forward(const MlpSpec& spec, const ParamVector& params, const Matrix& inputs);

/// Row-wise softmax with max-shift (log-sum-exp stable).
Matrix softmax(const Matrix& logits);

/// Row-wise log-softmax of one logits row into `out`.
void log_softmax_row(std::span<const double> logits, std::span<double> out);

struct LogLikResult {
  double loglik = 0.0;
  GradVector grad;
};

/// Log-likelihood sum_i log p(y_i | x_i, theta) over a batch of labelled rows
/// and its exact gradient via reverse accumulation.
LogLikResult grad_loglik(const MlpSpec& spec, const ParamVector& params,
                         const Matrix& inputs, std::span<const int> labels);

/// Generalized form: each row of `targets` is a nonnegative weight vector t
/// over classes; the contribution of row i is sum_c t_c * log p_c. Covers
/// count-labelled data (t = raw counts) and smoothed targets.
LogLikResult grad_loglik_targets(const MlpSpec& spec, const ParamVector& params,
                                 const Matrix& inputs, const Matrix& targets);

/// Forward-only evaluation of the quantities differentiated above.
double loglik_value(const MlpSpec& spec, const ParamVector& params,
                    const Matrix& inputs, std::span<const int> labels);
double loglik_value_targets(const MlpSpec& spec, const ParamVector& params,
                            const Matrix& inputs, const Matrix& targets);

/// Central finite differences of the batch log-likelihood, coordinate-wise
/// with per-coordinate step h*(1+|theta_i|). Test oracle; independent of the
/// reverse-mode path.
GradVector finite_diff_grad(const MlpSpec& spec, const ParamVector& params,
                            const Matrix& inputs, std::span<const int> labels,
                            double h);
GradVector finite_diff_grad_targets(const MlpSpec& spec, const ParamVector& params,
                                    const Matrix& inputs, const Matrix& targets,
                                    double h);

}  // namespace cpelab::nn
