#include "cpelab/energy.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "cpelab/kernels.hpp"

namespace cpelab::energy {

void PriorConfig::validate() const {
  if (!(std > 0.0)) throw std::invalid_argument("prior std must be > 0");
}

LikelihoodKind LikelihoodKind::label_smoothing(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("label smoothing alpha must be in (0,1)");
  }
  return {Variant::label_smoothing, alpha};
}

double LikelihoodKind::smoothing_target_sum(std::size_t num_classes) const {
  if (variant != Variant::label_smoothing) return 1.0;
  return (1.0 - alpha) + alpha * static_cast<double>(num_classes - 1) /
                             static_cast<double>(num_classes);
}

EffectiveScales effective_scales(double temperature, TemperMode mode) {
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("temperature must be > 0");
  }
  if (mode == TemperMode::joint) return {1.0, 1.0, temperature};
  return {1.0 / temperature, 1.0, 1.0};
}

std::pair<double, nn::GradVector> log_prior(const nn::ParamVector& params,
                                            const PriorConfig& prior) {
  prior.validate();
  const double var = prior.std * prior.std;
  const double d = static_cast<double>(params.size());
  const double sq = kernels::sum_squares(params.data(), params.size());
  const double value = -sq / (2.0 * var) - 0.5 * d * std::log(2.0 * std::numbers::pi * var);
  nn::GradVector grad(params);
  kernels::scale(-1.0 / var, grad.data(), grad.size());
  return {value, std::move(grad)};
}

double log_prior_value(const nn::ParamVector& params, const PriorConfig& prior) {
  prior.validate();
  const double var = prior.std * prior.std;
  const double d = static_cast<double>(params.size());
  const double sq = kernels::sum_squares(params.data(), params.size());
  return -sq / (2.0 * var) - 0.5 * d * std::log(2.0 * std::numbers::pi * var);
}

Matrix effective_targets(const data::LabeledDataset& dataset,
                         std::span<const std::size_t> indices,
                         const LikelihoodKind& kind) {
  if (kind.needs_counts() && !dataset.has_counts()) {
    throw std::invalid_argument("likelihood variant needs a counts matrix");
  }
  const std::size_t C = dataset.num_classes;
  Matrix targets(indices.size(), C);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t idx = indices[i];
    if (idx >= dataset.size()) throw std::invalid_argument("batch index out of range");
    switch (kind.variant) {
      case LikelihoodKind::Variant::categorical:
        targets(i, dataset.labels[idx]) = 1.0;
        break;
      case LikelihoodKind::Variant::counts:
        for (std::size_t c = 0; c < C; ++c) targets(i, c) = dataset.counts(idx, c);
        break;
      case LikelihoodKind::Variant::counts_smoothed: {
        double total = 0.0;
        for (std::size_t c = 0; c < C; ++c) total += dataset.counts(idx, c);
        if (total > 0.0) {
          for (std::size_t c = 0; c < C; ++c) {
            targets(i, c) = dataset.counts(idx, c) / total;
          }
        }
        break;
      }
      case LikelihoodKind::Variant::label_smoothing: {
        const double off = kind.alpha / static_cast<double>(C);
        for (std::size_t c = 0; c < C; ++c) targets(i, c) = off;
        targets(i, dataset.labels[idx]) = 1.0 - kind.alpha;
        break;
      }
    }
  }
  return targets;
}

double total_loglik(const nn::MlpSpec& spec, const nn::ParamVector& params,
                    const data::LabeledDataset& dataset, const LikelihoodKind& kind) {
  if (dataset.size() == 0) throw std::invalid_argument("dataset is empty");
  std::vector<std::size_t> all(dataset.size());
  std::iota(all.begin(), all.end(), 0);
  const Matrix targets = effective_targets(dataset, all, kind);
  return nn::loglik_value_targets(spec, params, dataset.features, targets);
}

double full_energy(const nn::MlpSpec& spec, const nn::ParamVector& params,
                   const data::LabeledDataset& dataset, const LikelihoodKind& kind,
                   const PriorConfig& prior) {
  return -total_loglik(spec, params, dataset, kind) - log_prior_value(params, prior);
}

BatchGrad batch_energy_grad(const nn::MlpSpec& spec, const nn::ParamVector& params,
                            std::size_t n_total, const Matrix& batch_features,
                            const Matrix& batch_targets, const PriorConfig& prior,
                            double lik_scale) {
  const std::size_t b = batch_features.rows;
  if (b == 0) throw std::invalid_argument("empty minibatch");
  if (b > n_total) throw std::invalid_argument("batch larger than dataset");

  nn::LogLikResult lik = nn::grad_loglik_targets(spec, params, batch_features, batch_targets);
  auto [prior_value, grad] = log_prior(params, prior);

  // grad U~ = -lik_scale*(n/B)*grad_loglik - grad_logprior
  const double scale = lik_scale * static_cast<double>(n_total) / static_cast<double>(b);
  kernels::scale(-1.0, grad.data(), grad.size());
  kernels::axpy(-scale, lik.grad.data(), grad.data(), grad.size());

  BatchGrad out;
  out.grad = std::move(grad);
  out.batch_loglik = lik.loglik;
  out.energy_estimate = -scale * lik.loglik - prior_value;
  return out;
}

BatchGrad minibatch_energy_grad(const nn::MlpSpec& spec, const nn::ParamVector& params,
                                const data::LabeledDataset& dataset,
                                std::span<const std::size_t> batch_indices,
                                const LikelihoodKind& kind, const PriorConfig& prior,
                                double lik_scale) {
  if (batch_indices.empty()) throw std::invalid_argument("empty minibatch");
  const std::size_t n = dataset.size();
  Matrix batch_x(batch_indices.size(), dataset.features.cols);
  for (std::size_t i = 0; i < batch_indices.size(); ++i) {
    const std::size_t idx = batch_indices[i];
    if (idx >= n) throw std::invalid_argument("batch index out of range");
    std::copy(dataset.features.row(idx).begin(), dataset.features.row(idx).end(),
              batch_x.row(i).begin());
  }
  const Matrix targets = effective_targets(dataset, batch_indices, kind);
  return batch_energy_grad(spec, params, n, batch_x, targets, prior, lik_scale);
}

}  // namespace cpelab::energy
