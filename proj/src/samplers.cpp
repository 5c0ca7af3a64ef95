#include "cpelab/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "cpelab/kernels.hpp"
#include "cpelab/rng.hpp"

namespace cpelab::samplers {

void SamplerConfig::validate() const {
  if (!(temperature > 0.0)) throw std::invalid_argument("sampler: temperature must be > 0");
  if (!(base_step > 0.0)) throw std::invalid_argument("sampler: base_step must be > 0");
  if (batch_size < 1) throw std::invalid_argument("sampler: batch_size must be >= 1");
  if (cycle_epochs < 1) throw std::invalid_argument("sampler: cycle_epochs must be >= 1");
  if (total_epochs <= burn_in_epochs) {
    throw std::invalid_argument("sampler: needs at least one post-burn-in cycle");
  }
  if ((total_epochs - burn_in_epochs) % cycle_epochs != 0) {
    throw std::invalid_argument(
        "sampler: total_epochs - burn_in_epochs must be divisible by cycle_epochs");
  }
  if (momentum_weight < 0.0 || momentum_weight >= 1.0) {
    throw std::invalid_argument("sampler: momentum_weight must be in [0,1)");
  }
}

std::string format_cycle_record(const CycleRecord& rec) {
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "cycle=%zu epoch=%zu eps=%.6g batch_energy=%.6g kinetic_temp=%.6g",
                rec.cycle, rec.epoch, rec.step_size, rec.batch_energy, rec.kinetic_temp);
  return buf;
}

double cyclical_step(std::uint64_t t, std::uint64_t steps_per_cycle, double base_step) {
  if (steps_per_cycle < 1) throw std::invalid_argument("steps_per_cycle must be >= 1");
  const double phase = static_cast<double>(t % steps_per_cycle) /
                       static_cast<double>(steps_per_cycle);
  return 0.5 * base_step * (std::cos(std::numbers::pi * phase) + 1.0);
}

void sgld_step(ChainState& state, const nn::GradVector& grad_energy, double step_size,
               double noise_temp, std::mt19937_64& rng) {
  if (grad_energy.size() != state.params.size()) {
    throw std::invalid_argument("sgld_step: gradient length mismatch");
  }
  if (noise_temp < 0.0) throw std::invalid_argument("sgld_step: negative temperature");
  kernels::axpy(-0.5 * step_size, grad_energy.data(), state.params.data(),
                state.params.size());
  if (noise_temp > 0.0 && step_size > 0.0) {
    std::normal_distribution<double> normal(0.0, std::sqrt(step_size * noise_temp));
    for (double& v : state.params) v += normal(rng);
  }
  ++state.step;
}

void sghmc_step(ChainState& state, const nn::GradVector& grad_energy, double step_size,
                double momentum_weight, double noise_temp, std::mt19937_64& rng) {
  if (grad_energy.size() != state.params.size()) {
    throw std::invalid_argument("sghmc_step: gradient length mismatch");
  }
  if (momentum_weight < 0.0 || momentum_weight >= 1.0) {
    throw std::invalid_argument("sghmc_step: momentum_weight must be in [0,1)");
  }
  if (noise_temp < 0.0) throw std::invalid_argument("sghmc_step: negative temperature");
  if (state.momentum.size() != state.params.size()) {
    state.momentum.assign(state.params.size(), 0.0);
  }
  kernels::scale(1.0 - step_size * momentum_weight, state.momentum.data(),
                 state.momentum.size());
  kernels::axpy(-step_size, grad_energy.data(), state.momentum.data(),
                state.momentum.size());
  if (noise_temp > 0.0 && step_size > 0.0) {
    std::normal_distribution<double> normal(
        0.0, std::numbers::sqrt2 * std::sqrt(step_size * noise_temp));
    for (double& v : state.momentum) v += normal(rng);
  }
  kernels::axpy(step_size, state.momentum.data(), state.params.data(),
                state.params.size());
  ++state.step;
}

namespace {

bool all_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

ChainResult run_chain(const nn::MlpSpec& spec, const data::LabeledDataset& dataset,
                      const energy::LikelihoodKind& likelihood,
                      const energy::PriorConfig& prior, const SamplerConfig& config,
                      const BatchTransform& augment) {
  spec.validate();
  dataset.validate();
  config.validate();
  if (dataset.features.cols != spec.input_dim) {
    throw std::invalid_argument("run_chain: dataset/spec input width mismatch");
  }
  const std::size_t n = dataset.size();
  const std::size_t batch = std::min(config.batch_size, n);
  if (config.batch_size > n) {
    throw std::invalid_argument("run_chain: batch_size exceeds dataset size");
  }

  const std::size_t steps_per_epoch = (n + batch - 1) / batch;
  const std::uint64_t burn_steps =
      static_cast<std::uint64_t>(config.burn_in_epochs) * steps_per_epoch;
  const std::uint64_t cycle_steps =
      static_cast<std::uint64_t>(config.cycle_epochs) * steps_per_epoch;
  const std::size_t expected_samples = config.samples_per_chain();
  // base_step is a dataset-size-normalized learning rate; the Langevin step
  // applied to the sum-scaled gradient is base_step/n.
  const double per_step_base = config.base_step / static_cast<double>(n);

  const auto scales = energy::effective_scales(config.temperature, config.temper_mode);

  ChainResult result;
  ChainState state;
  state.params = nn::init_params(spec, prior.std, rng::split_seed(config.seed, "init"));
  if (config.kind == SamplerKind::sghmc) {
    state.momentum.assign(state.params.size(), 0.0);
  }
  auto shuffle_rng = rng::make_rng(rng::split_seed(config.seed, "shuffle"));
  auto noise_rng = rng::make_rng(rng::split_seed(config.seed, "noise"));
  auto augment_rng = rng::make_rng(rng::split_seed(config.seed, "augment"));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const double d = static_cast<double>(state.params.size());

  result.ensemble.samples.reserve(expected_samples);
  Matrix batch_x;
  std::vector<std::size_t> batch_idx;

  std::uint64_t global_step = 0;
  double cycle_kinetic_sum = 0.0;
  std::uint64_t cycle_kinetic_steps = 0;
  for (std::size_t epoch = 0; epoch < config.total_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t b = std::min(batch, n - start);
      batch_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                       order.begin() + static_cast<std::ptrdiff_t>(start + b));

      // Burn-in explores at the base step; cycles are clocked from its end so
      // that collection always happens at the coldest step of a cycle.
      const std::uint64_t phase =
          global_step < burn_steps ? 0 : (global_step - burn_steps) % cycle_steps;
      const double eps = cyclical_step(phase, cycle_steps, per_step_base);

      batch_x = Matrix(b, dataset.features.cols);
      for (std::size_t i = 0; i < b; ++i) {
        std::copy(dataset.features.row(batch_idx[i]).begin(),
                  dataset.features.row(batch_idx[i]).end(), batch_x.row(i).begin());
      }
      if (augment) augment(batch_x, augment_rng);
      const Matrix targets = energy::effective_targets(dataset, batch_idx, likelihood);

      energy::BatchGrad bg;
      try {
        bg = energy::batch_energy_grad(spec, state.params, n, batch_x, targets, prior,
                                       scales.lik_scale);
      } catch (const std::exception& e) {
        result.diverged = true;
        result.divergence_note = std::string("gradient failure at step ") +
                                 std::to_string(global_step) + ": " + e.what();
        return result;
      }

      if (config.kind == SamplerKind::sgld) {
        sgld_step(state, bg.grad, eps, scales.noise_temp, noise_rng);
      } else {
        sghmc_step(state, bg.grad, eps, config.momentum_weight, scales.noise_temp,
                   noise_rng);
      }
      ++result.gradient_evals;

      if (!all_finite(state.params) || std::abs(bg.energy_estimate) > 1e12) {
        result.diverged = true;
        result.divergence_note =
            "diverged at step " + std::to_string(global_step) + " (epoch " +
            std::to_string(epoch) + "): energy estimate " +
            std::to_string(bg.energy_estimate);
        return result;
      }

      if (config.kind == SamplerKind::sghmc && global_step >= burn_steps) {
        cycle_kinetic_sum +=
            kernels::sum_squares(state.momentum.data(), state.momentum.size()) / d;
        ++cycle_kinetic_steps;
      }
      if (global_step >= burn_steps &&
          (global_step - burn_steps + 1) % cycle_steps == 0) {
        const std::size_t cycle = (global_step - burn_steps) / cycle_steps;
        result.ensemble.samples.push_back(state.params);
        result.ensemble.meta.push_back({cycle, epoch, eps});
        double kinetic = 0.0;
        if (config.kind == SamplerKind::sghmc) {
          result.ensemble.momenta.push_back(state.momentum);
          kinetic = cycle_kinetic_sum / static_cast<double>(cycle_kinetic_steps);
          cycle_kinetic_sum = 0.0;
          cycle_kinetic_steps = 0;
        }
        result.cycle_log.push_back({cycle, epoch, eps, bg.energy_estimate, kinetic});
      }
      ++global_step;
    }
  }

  if (result.ensemble.size() != expected_samples) {
    throw std::logic_error("run_chain: collected sample count mismatch");
  }
  return result;
}

double kinetic_temperature(const PosteriorEnsemble& ensemble) {
  if (ensemble.momenta.empty()) {
    throw std::invalid_argument("kinetic_temperature: ensemble has no momenta (SGLD chain?)");
  }
  double acc = 0.0;
  for (const auto& m : ensemble.momenta) {
    acc += kernels::sum_squares(m.data(), m.size()) / static_cast<double>(m.size());
  }
  return acc / static_cast<double>(ensemble.momenta.size());
}

void adam_step(nn::ParamVector& params, const nn::GradVector& grad,
               std::vector<double>& moment1, std::vector<double>& moment2,
               std::uint64_t t, double lr, double beta1, double beta2, double eps) {
  if (t < 1) throw std::invalid_argument("adam_step: t must be >= 1");
  if (grad.size() != params.size() || moment1.size() != params.size() ||
      moment2.size() != params.size()) {
    throw std::invalid_argument("adam_step: size mismatch");
  }
  const double corr1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double corr2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    moment1[i] = beta1 * moment1[i] + (1.0 - beta1) * grad[i];
    moment2[i] = beta2 * moment2[i] + (1.0 - beta2) * grad[i] * grad[i];
    const double m_hat = moment1[i] / corr1;
    const double v_hat = moment2[i] / corr2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

}  // namespace cpelab::samplers
