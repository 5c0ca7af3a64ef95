#include "cpelab/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "cpelab/kernels.hpp"
#include "cpelab/rng.hpp"

namespace cpelab::nn {

void MlpSpec::validate() const {
  if (input_dim < 1) throw std::invalid_argument("MlpSpec: input_dim must be >= 1");
  if (num_classes < 2) throw std::invalid_argument("MlpSpec: num_classes must be >= 2");
  for (std::size_t w : hidden_widths) {
    if (w < 1) throw std::invalid_argument("MlpSpec: hidden widths must be >= 1");
  }
}

std::vector<std::size_t> MlpSpec::layer_sizes() const {
  std::vector<std::size_t> sizes;
  sizes.reserve(hidden_widths.size() + 2);
  sizes.push_back(input_dim);
  sizes.insert(sizes.end(), hidden_widths.begin(), hidden_widths.end());
  sizes.push_back(num_classes);
  return sizes;
}

std::size_t MlpSpec::param_count() const {
  const auto sizes = layer_sizes();
  std::size_t d = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    d += (sizes[l] + 1) * sizes[l + 1];
  }
  return d;
}

ParamVector init_params(const MlpSpec& spec, double prior_std, std::uint64_t seed) {
  spec.validate();
  if (!(prior_std > 0.0)) {
    throw std::invalid_argument("init_params: prior_std must be > 0");
  }
  auto gen = rng::make_rng(seed);
  std::normal_distribution<double> normal(0.0, prior_std);
  ParamVector params(spec.param_count());
  for (double& v : params) v = normal(gen);
  return params;
}

namespace {

void check_params(const MlpSpec& spec, const ParamVector& params) {
  if (params.size() != spec.param_count()) {
    throw std::invalid_argument("parameter vector has length " +
                                std::to_string(params.size()) + ", spec needs " +
                                std::to_string(spec.param_count()));
  }
}

void check_inputs(const MlpSpec& spec, const Matrix& inputs) {
  if (inputs.cols != spec.input_dim) {
    throw std::invalid_argument("input matrix has " + std::to_string(inputs.cols) +
                                " columns, spec expects " +
                                std::to_string(spec.input_dim));
  }
}

// Offsets of (W, b) per layer inside the flat vector.
struct LayerView {
  std::size_t w_off, b_off, out, in;
};

std::vector<LayerView> layer_views(const MlpSpec& spec) {
  const auto sizes = spec.layer_sizes();
  std::vector<LayerView> views(sizes.size() - 1);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    views[l] = {off, off + sizes[l] * sizes[l + 1], sizes[l + 1], sizes[l]};
    off += (sizes[l] + 1) * sizes[l + 1];
  }
  return views;
}

}  // namespace

std::vector<LayerWeights> unflatten(const MlpSpec& spec, const ParamVector& params) {
  spec.validate();
  check_params(spec, params);
  std::vector<LayerWeights> layers;
  for (const LayerView& v : layer_views(spec)) {
    LayerWeights lw;
    lw.weights = Matrix(v.out, v.in);
    std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(v.w_off), v.out * v.in,
                lw.weights.data.begin());
    lw.bias.assign(params.begin() + static_cast<std::ptrdiff_t>(v.b_off),
                   params.begin() + static_cast<std::ptrdiff_t>(v.b_off + v.out));
    layers.push_back(std::move(lw));
  }
  return layers;
}

ParamVector flatten(const MlpSpec& spec, const std::vector<LayerWeights>& layers) {
  spec.validate();
  const auto sizes = spec.layer_sizes();
  if (layers.size() != sizes.size() - 1) {
    throw std::invalid_argument("flatten: wrong number of layers");
  }
  ParamVector params;
  params.reserve(spec.param_count());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerWeights& lw = layers[l];
    if (lw.weights.rows != sizes[l + 1] || lw.weights.cols != sizes[l] ||
        lw.bias.size() != sizes[l + 1]) {
      throw std::invalid_argument("flatten: layer " + std::to_string(l) +
                                  " has mismatched shape");
    }
    params.insert(params.end(), lw.weights.data.begin(), lw.weights.data.end());
    params.insert(params.end(), lw.bias.begin(), lw.bias.end());
  }
  return params;
}

Matrix forward(const MlpSpec& spec, const ParamVector& params, const Matrix& inputs) {
  spec.validate();
  check_params(spec, params);
  check_inputs(spec, inputs);

  const auto views = layer_views(spec);
  Matrix logits(inputs.rows, spec.num_classes);
  std::vector<double> cur, next;
  for (std::size_t i = 0; i < inputs.rows; ++i) {
    cur.assign(inputs.row(i).begin(), inputs.row(i).end());
    for (std::size_t l = 0; l < views.size(); ++l) {
      const LayerView& v = views[l];
      next.resize(v.out);
      kernels::matvec(params.data() + v.w_off, cur.data(), params.data() + v.b_off,
                      next.data(), v.out, v.in);
      if (l + 1 < views.size()) {
        // ReLU with subgradient 0 at 0 (consistent with backward).
        for (double& x : next) x = x > 0.0 ? x : 0.0;
      }
      cur.swap(next);
    }
    std::copy(cur.begin(), cur.end(), logits.row(i).begin());
  }
  return logits;
}

void log_softmax_row(std::span<const double> logits, std::span<double> out) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    out[c] = logits[c] - mx;
    sum += std::exp(out[c]);
  }
  const double lse = std::log(sum);
  for (std::size_t c = 0; c < logits.size(); ++c) out[c] -= lse;
}

Matrix softmax(const Matrix& logits) {
  Matrix probs(logits.rows, logits.cols);
  std::vector<double> ls(logits.cols);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    log_softmax_row(logits.row(i), ls);
    for (std::size_t c = 0; c < logits.cols; ++c) probs(i, c) = std::exp(ls[c]);
  }
  return probs;
}

namespace {

struct TargetRow {
  // Effective target weights t over classes for one sample; the likelihood
  // contribution is sum_c t_c * log p_c and the logit gradient is
  // t - (sum_c t_c) * p.
  const double* values = nullptr;  // null means one-hot at `label`
  int label = -1;
  double mass = 1.0;
};

class TargetSource {
 public:
  TargetSource(std::span<const int> labels, std::size_t num_classes)
      : labels_(labels), num_classes_(num_classes) {}
  TargetSource(const Matrix* targets, std::size_t num_classes)
      : targets_(targets), num_classes_(num_classes) {}

  std::size_t size() const { return targets_ ? targets_->rows : labels_.size(); }

  TargetRow operator[](std::size_t i) const {
    TargetRow row;
    if (targets_) {
      row.values = targets_->row(i).data();
      double mass = 0.0;
      for (std::size_t c = 0; c < num_classes_; ++c) {
        const double t = row.values[c];
        if (t < 0.0 || !std::isfinite(t)) {
          throw std::invalid_argument("target weights must be finite and >= 0");
        }
        mass += t;
      }
      row.mass = mass;
    } else {
      row.label = labels_[i];
      if (row.label < 0 || static_cast<std::size_t>(row.label) >= num_classes_) {
        throw std::invalid_argument("label out of range [0, C)");
      }
      row.mass = 1.0;
    }
    return row;
  }

 private:
  std::span<const int> labels_;
  const Matrix* targets_ = nullptr;
  std::size_t num_classes_;
};

double row_loglik(const TargetRow& t, std::span<const double> log_probs) {
  if (t.values == nullptr) return log_probs[t.label];
  double ll = 0.0;
  for (std::size_t c = 0; c < log_probs.size(); ++c) {
    if (t.values[c] != 0.0) ll += t.values[c] * log_probs[c];
  }
  return ll;
}

LogLikResult backprop(const MlpSpec& spec, const ParamVector& params,
                      const Matrix& inputs, const TargetSource& targets) {
  spec.validate();
  check_params(spec, params);
  check_inputs(spec, inputs);
  if (targets.size() != inputs.rows) {
    throw std::invalid_argument("batch inputs and targets disagree in length");
  }

  const auto views = layer_views(spec);
  const std::size_t L = views.size();
  LogLikResult result;
  result.grad.assign(params.size(), 0.0);

  // Per-sample activation stack; acts[0] is the input row, acts[l] the
  // post-ReLU output of layer l-1, acts[L] the logits.
  std::vector<std::vector<double>> acts(L + 1);
  std::vector<double> log_probs(spec.num_classes);
  std::vector<double> delta, delta_prev;

  for (std::size_t i = 0; i < inputs.rows; ++i) {
    acts[0].assign(inputs.row(i).begin(), inputs.row(i).end());
    for (std::size_t l = 0; l < L; ++l) {
      const LayerView& v = views[l];
      acts[l + 1].resize(v.out);
      kernels::matvec(params.data() + v.w_off, acts[l].data(),
                      params.data() + v.b_off, acts[l + 1].data(), v.out, v.in);
      if (l + 1 < L) {
        for (double& x : acts[l + 1]) x = x > 0.0 ? x : 0.0;
      }
    }

    for (double v : acts[L]) {
      if (!std::isfinite(v)) {
        throw std::runtime_error("grad_loglik: non-finite logits in forward pass");
      }
    }
    log_softmax_row(acts[L], log_probs);

    const TargetRow target = targets[i];
    if (target.mass == 0.0) continue;  // all-zero counts contribute nothing
    result.loglik += row_loglik(target, log_probs);

    // dloglik/dlogits = t - mass * softmax
    delta.resize(spec.num_classes);
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
      const double t_c = target.values ? target.values[c]
                                       : (static_cast<int>(c) == target.label ? 1.0 : 0.0);
      delta[c] = t_c - target.mass * std::exp(log_probs[c]);
    }

    for (std::size_t l = L; l-- > 0;) {
      const LayerView& v = views[l];
      kernels::rank1_update(result.grad.data() + v.w_off, delta.data(),
                            acts[l].data(), v.out, v.in);
      kernels::axpy(1.0, delta.data(), result.grad.data() + v.b_off, v.out);
      if (l > 0) {
        delta_prev.resize(v.in);
        kernels::matvec_t(params.data() + v.w_off, delta.data(), delta_prev.data(),
                          v.out, v.in);
        // ReLU mask; acts[l] is post-activation so > 0 iff pre-activation > 0
        for (std::size_t j = 0; j < v.in; ++j) {
          if (acts[l][j] <= 0.0) delta_prev[j] = 0.0;
        }
        delta.swap(delta_prev);
      }
    }
  }

  if (!std::isfinite(result.loglik)) {
    throw std::runtime_error("grad_loglik: non-finite log-likelihood");
  }
  return result;
}

template <typename Eval>
GradVector central_differences(const ParamVector& params, double h, Eval&& eval) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be > 0");
  ParamVector theta = params;
  GradVector grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double hi = h * (1.0 + std::abs(params[i]));
    const double saved = theta[i];
    theta[i] = saved + hi;
    const double up = eval(theta);
    theta[i] = saved - hi;
    const double down = eval(theta);
    theta[i] = saved;
    grad[i] = (up - down) / (2.0 * hi);
  }
  return grad;
}

}  // namespace

LogLikResult grad_loglik(const MlpSpec& spec, const ParamVector& params,
                         const Matrix& inputs, std::span<const int> labels) {
  return backprop(spec, params, inputs, TargetSource(labels, spec.num_classes));
}

LogLikResult grad_loglik_targets(const MlpSpec& spec, const ParamVector& params,
                                 const Matrix& inputs, const Matrix& targets) {
  if (targets.cols != spec.num_classes) {
    throw std::invalid_argument("target matrix must have num_classes columns");
  }
  return backprop(spec, params, inputs, TargetSource(&targets, spec.num_classes));
}

double loglik_value(const MlpSpec& spec, const ParamVector& params,
                    const Matrix& inputs, std::span<const int> labels) {
  const Matrix logits = forward(spec, params, inputs);
  std::vector<double> ls(spec.num_classes);
  double ll = 0.0;
  for (std::size_t i = 0; i < logits.rows; ++i) {
    log_softmax_row(logits.row(i), ls);
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= spec.num_classes) {
      throw std::invalid_argument("label out of range [0, C)");
    }
    ll += ls[y];
  }
  return ll;
}

double loglik_value_targets(const MlpSpec& spec, const ParamVector& params,
                            const Matrix& inputs, const Matrix& targets) {
  const Matrix logits = forward(spec, params, inputs);
  if (targets.rows != logits.rows || targets.cols != spec.num_classes) {
    throw std::invalid_argument("target matrix shape mismatch");
  }
  std::vector<double> ls(spec.num_classes);
  double ll = 0.0;
  for (std::size_t i = 0; i < logits.rows; ++i) {
    log_softmax_row(logits.row(i), ls);
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
      if (targets(i, c) != 0.0) ll += targets(i, c) * ls[c];
    }
  }
  return ll;
}

GradVector finite_diff_grad(const MlpSpec& spec, const ParamVector& params,
                            const Matrix& inputs, std::span<const int> labels,
                            double h) {
  return central_differences(params, h, [&](const ParamVector& theta) {
    return loglik_value(spec, theta, inputs, labels);
  });
}

GradVector finite_diff_grad_targets(const MlpSpec& spec, const ParamVector& params,
                                    const Matrix& inputs, const Matrix& targets,
                                    double h) {
  return central_differences(params, h, [&](const ParamVector& theta) {
    return loglik_value_targets(spec, theta, inputs, targets);
  });
}

}  // namespace cpelab::nn
