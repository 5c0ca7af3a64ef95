#pragma once

#include <span>
#include <utility>

#include "cpelab/data.hpp"
#include "cpelab/nn.hpp"

namespace cpelab::energy {

/// Isotropic Gaussian prior N(0, std^2 I) over the flat parameter vector.
struct PriorConfig {
  double std = 1.0;
  void validate() const;
};

/// Likelihood variants for the potential energy.
///  - categorical:      log p(y_i | x_i, theta)
///  - counts:           y_i^T log f_i with y_i the raw per-class counts
///  - counts_smoothed:  (y_i / S_i)^T log f_i, S_i the per-example count total
///  - label_smoothing:  target (1-alpha) on the true class, alpha/C elsewhere
///    (as written; the target sum 1 - alpha/C is exposed as a diagnostic)
struct LikelihoodKind {
  enum class Variant { categorical, counts, counts_smoothed, label_smoothing };
  Variant variant = Variant::categorical;
  double alpha = 0.0;  // label_smoothing only, in (0,1)

  static LikelihoodKind categorical() { return {Variant::categorical, 0.0}; }
  static LikelihoodKind counts() { return {Variant::counts, 0.0}; }
  static LikelihoodKind counts_smoothed() { return {Variant::counts_smoothed, 0.0}; }
  static LikelihoodKind label_smoothing(double alpha);

  bool needs_counts() const {
    return variant == Variant::counts || variant == Variant::counts_smoothed;
  }
  /// Sum of the label-smoothing target vector, 1 - alpha + alpha/C * ... = 1 - alpha*(C-1)/C + ...;
  /// for the other variants the per-example target mass (1 or the count total).
  double smoothing_target_sum(std::size_t num_classes) const;
};

enum class TemperMode { joint, likelihood_only };

/// How a temperature T is realized:
///  - joint: gradients untouched, sampler noise runs at temperature T, which
///    targets exp(-U/T) exactly;
///  - likelihood_only: likelihood gradient scaled by 1/T, unit noise.
struct EffectiveScales {
  double lik_scale = 1.0;
  double prior_scale = 1.0;
  double noise_temp = 1.0;
};

EffectiveScales effective_scales(double temperature, TemperMode mode);

/// log N(theta; 0, std^2 I) and its gradient -theta/std^2.
std::pair<double, nn::GradVector> log_prior(const nn::ParamVector& params,
                                            const PriorConfig& prior);
double log_prior_value(const nn::ParamVector& params, const PriorConfig& prior);

/// Sum over the whole dataset of the variant's log-likelihood term.
double total_loglik(const nn::MlpSpec& spec, const nn::ParamVector& params,
                    const data::LabeledDataset& dataset, const LikelihoodKind& kind);

/// Full-batch potential energy U = -total_loglik - log_prior.
double full_energy(const nn::MlpSpec& spec, const nn::ParamVector& params,
                   const data::LabeledDataset& dataset, const LikelihoodKind& kind,
                   const PriorConfig& prior);

struct BatchGrad {
  nn::GradVector grad;           // gradient of the minibatch energy estimate
  double batch_loglik = 0.0;     // unscaled batch log-likelihood
  double energy_estimate = 0.0;  // -lik_scale*(n/B)*batch_loglik - log_prior
};

/// Unbiased minibatch estimator of grad U: the likelihood term is scaled by
/// n/B_actual (B_actual = batch size actually used, so partial batches stay
/// unbiased). lik_scale comes from effective_scales in likelihood-only mode.
BatchGrad minibatch_energy_grad(const nn::MlpSpec& spec, const nn::ParamVector& params,
                                const data::LabeledDataset& dataset,
                                std::span<const std::size_t> batch_indices,
                                const LikelihoodKind& kind, const PriorConfig& prior,
                                double lik_scale = 1.0);

/// Same estimator over an explicit batch (features possibly augmented);
/// n_total is the dataset size the n/B factor refers to.
BatchGrad batch_energy_grad(const nn::MlpSpec& spec, const nn::ParamVector& params,
                            std::size_t n_total, const Matrix& batch_features,
                            const Matrix& batch_targets, const PriorConfig& prior,
                            double lik_scale = 1.0);

/// Per-example effective target rows for a likelihood variant (n x C); used by
/// both the energy estimator and the finite-difference oracle in tests.
Matrix effective_targets(const data::LabeledDataset& dataset,
                         std::span<const std::size_t> indices,
                         const LikelihoodKind& kind);

}  // namespace cpelab::energy
