#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cpelab/data.hpp"
#include "cpelab/energy.hpp"
#include "cpelab/nn.hpp"

namespace cpelab::samplers {

enum class SamplerKind { sgld, sghmc };

struct SamplerConfig {
  SamplerKind kind = SamplerKind::sgld;
  double temperature = 1.0;
  // Learning rate in mean-gradient units: the per-step Langevin step size is
  // base_step/n. Feeding the sum-scaled energy gradient a raw step of this
  // magnitude would diverge for any nontrivial n.
  double base_step = 0.1;
  std::size_t batch_size = 1;
  std::size_t burn_in_epochs = 0;
  std::size_t cycle_epochs = 1;
  std::size_t total_epochs = 1;
  double momentum_weight = 0.9;    // sghmc friction alpha, in [0,1)
  energy::TemperMode temper_mode = energy::TemperMode::joint;
  std::uint64_t seed = 0;

  void validate() const;  // throws std::invalid_argument
  std::size_t samples_per_chain() const {
    return (total_epochs - burn_in_epochs) / cycle_epochs;
  }
};

struct ChainState {
  nn::ParamVector params;
  std::vector<double> momentum;
  std::uint64_t step = 0;
};

struct SampleMeta {
  std::size_t cycle = 0;
  std::size_t epoch = 0;
  double step_size = 0.0;
};

struct PosteriorEnsemble {
  std::vector<nn::ParamVector> samples;
  std::vector<SampleMeta> meta;
  std::vector<std::vector<double>> momenta;  // sghmc chains only
  std::size_t size() const { return samples.size(); }
};

/// One structured log record per completed cycle.
struct CycleRecord {
  std::size_t cycle = 0;
  std::size_t epoch = 0;
  double step_size = 0.0;
  double batch_energy = 0.0;   // minibatch U estimate at collection
  double kinetic_temp = 0.0;   // m.m/d averaged over the cycle's steps (sghmc)
};

struct ChainResult {
  PosteriorEnsemble ensemble;
  std::uint64_t gradient_evals = 0;
  bool diverged = false;
  std::string divergence_note;
  std::vector<CycleRecord> cycle_log;
};

std::string format_cycle_record(const CycleRecord& rec);

/// Cosine cyclical schedule: eps_t = (eps0/2)*(cos(pi*phase/steps) + 1) with
/// phase = t mod steps_per_cycle. Starts each cycle at eps0 and decays toward
/// (but never reaching) zero.
double cyclical_step(std::uint64_t t, std::uint64_t steps_per_cycle, double base_step);

/// SGLD update: theta <- theta - (eps/2)*grad_U + eta, eta ~ N(0, eps*T*I).
/// At T=1 this is the usual Langevin discretization of exp(-U).
void sgld_step(ChainState& state, const nn::GradVector& grad_energy, double step_size,
               double noise_temp, std::mt19937_64& rng);

/// SG-HMC update, symplectic Euler with friction (no 1/2 on the drift):
///   m <- (1 - eps*alpha)*m - eps*grad_U + sqrt(2)*eta,  eta ~ N(0, eps*T*I)
///   theta <- theta + eps*m
/// The discrete stationary distribution of the quadratic test problem has
/// Var(theta) ~= (T/alpha)*Var_target and E[m^2] ~= T/alpha, so chains meant
/// to sample at temperature T should run with momentum_weight near 1; the
/// oracle tests pin the exact discrete covariance.
void sghmc_step(ChainState& state, const nn::GradVector& grad_energy, double step_size,
                double momentum_weight, double noise_temp, std::mt19937_64& rng);

/// Optional per-batch feature transform (data augmentation hook).
using BatchTransform = std::function<void(Matrix& batch_features, std::mt19937_64& rng)>;

/// Run one chain: prior-initialized parameters, seeded epoch shuffling, one
/// minibatch step per batch, burn-in at the base step size, then cosine
/// cycles clocked from the end of burn-in with one sample collected at the
/// final (coldest) step of each cycle. Exactly ceil(n/B)*total_epochs
/// gradient evaluations are performed; the counter is returned.
///
/// Divergence (non-finite parameters or |U estimate| > 1e12) aborts the chain
/// and returns a flagged result instead of throwing.
ChainResult run_chain(const nn::MlpSpec& spec, const data::LabeledDataset& dataset,
                      const energy::LikelihoodKind& likelihood,
                      const energy::PriorConfig& prior, const SamplerConfig& config,
                      const BatchTransform& augment = {});

/// Average of m.m/d over the collected states of an SG-HMC chain; approaches
/// the configured temperature for a well-simulated chain.
double kinetic_temperature(const PosteriorEnsemble& ensemble);

/// Standard Adam update with bias correction; moments and params updated in
/// place, t is the 1-based step count.
void adam_step(nn::ParamVector& params, const nn::GradVector& grad,
               std::vector<double>& moment1, std::vector<double>& moment2,
               std::uint64_t t, double lr = 1e-3, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

}  // namespace cpelab::samplers
