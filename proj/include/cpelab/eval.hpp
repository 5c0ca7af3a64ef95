#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cpelab/matrix.hpp"
#include "cpelab/nn.hpp"
#include "cpelab/samplers.hpp"

namespace cpelab::eval {

struct MetricsRecord {
  double temperature = 1.0;
  double test_ce = 0.0;   // nats
  double accuracy = 0.0;
  double ece = 0.0;
  std::size_t n_train = 0;
  std::uint64_t seed = 0;
  std::size_t ensemble_size = 0;
};

struct SweepResult {
  std::vector<MetricsRecord> records;
  double cper = 1.0;
};

/// Bayesian model average: mean over ensemble members of softmax(forward).
Matrix posterior_predictive(const nn::MlpSpec& spec,
                            const samplers::PosteriorEnsemble& ensemble,
                            const Matrix& inputs);

/// Mean negative log predicted probability of the true label, in nats.
/// Zero probabilities are floored at 1e-12; `floored` (when given) counts how
/// often the floor fired.
double test_ce(const Matrix& probs, std::span<const int> labels,
               std::size_t* floored = nullptr);

/// Argmax accuracy with lowest-index tie-break.
double accuracy(const Matrix& probs, std::span<const int> labels);

/// Expected calibration error over equal-width confidence bins on the max
/// probability; empty bins contribute nothing.
double ece(const Matrix& probs, std::span<const int> labels, std::size_t n_bins = 15);

/// Seed-averaged CE curve over the temperature grid; returns
/// l(T*) / l(T=1) with T* the grid argmin. Requires T=1 in the records.
double cper(std::span<const MetricsRecord> records);

/// Alternative reading: CPER computed per seed, then averaged.
double cper_per_seed_mean(std::span<const MetricsRecord> records);

struct GridBounds {
  double xmin = -3.0, xmax = 3.0, ymin = -3.0, ymax = 3.0;
};

/// Posterior-mean class-1 probability on a resolution x resolution grid of a
/// 2D input space, row-major with y varying slowest.
struct DecisionGrid {
  std::size_t resolution = 0;
  GridBounds bounds;
  std::vector<double> prob1;  // resolution*resolution cells

  double x_at(std::size_t col) const;
  double y_at(std::size_t row) const;
};

DecisionGrid decision_grid(const nn::MlpSpec& spec,
                           const samplers::PosteriorEnsemble& ensemble,
                           const GridBounds& bounds, std::size_t resolution);

/// Fraction of grid cells where the thresholded posterior mean (>= 0.5 means
/// class 1) matches a reference rule; the default rule is the toy-data Bayes
/// classifier x + y >= 0.
double boundary_agreement(const DecisionGrid& grid,
                          const std::function<int(double, double)>& rule = {});

}  // namespace cpelab::eval
