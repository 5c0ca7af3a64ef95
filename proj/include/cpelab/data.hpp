#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cpelab/matrix.hpp"

namespace cpelab::data {

/// Classification dataset; counts is an optional n x C matrix of raw labeller
/// tallies (rows need not argmax to `labels` -- they are raw data).
struct LabeledDataset {
  Matrix features;           // n x p
  std::vector<int> labels;   // length n, values in [0, C)
  Matrix counts;             // n x C when present, else empty
  std::size_t num_classes = 0;
  std::string name;

  std::size_t size() const { return features.rows; }
  bool has_counts() const { return !counts.empty(); }
  void validate() const;  // throws std::invalid_argument
};

/// Epoch/cycle bookkeeping for one chain, tied to a dataset size via
/// G = ceil(n/B) * epochs.
struct BudgetSchedule {
  std::size_t n = 0;
  std::size_t batch_size = 0;
  std::size_t epochs = 0;
  std::size_t burn_in_epochs = 0;
  std::size_t cycle_epochs = 0;

  std::size_t steps_per_epoch() const { return (n + batch_size - 1) / batch_size; }
  std::size_t total_gradient_steps() const { return steps_per_epoch() * epochs; }
  std::size_t samples_per_chain() const {
    return (epochs - burn_in_epochs) / cycle_epochs;
  }
  void validate() const;
};

/// Two 2D Gaussian clusters, class 0 at (-1,-1) and class 1 at (1,1), unit
/// covariance, n/2 points each. The Bayes rule is sign(x+y).
LabeledDataset gen_toy_gaussians(std::size_t n, std::uint64_t seed);

/// IDX (big-endian) image/label pair, e.g. MNIST; pixels scaled to [0,1].
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Uniform subsample of m rows without replacement; deterministic given seed.
LabeledDataset subsample(const LabeledDataset& dataset, std::size_t m, std::uint64_t seed);

/// Rescale a reference schedule to a new dataset size so that the total
/// gradient-step budget and the per-chain sample count are preserved exactly.
/// Throws std::invalid_argument with the nearest feasible epoch count when the
/// exact budget cannot be met.
BudgetSchedule schedule_for_budget(const BudgetSchedule& reference, std::size_t n_sub);

enum class AugmentKind { flip_crop, brightness_contrast_crop };

struct ImageShape {
  std::size_t height = 0, width = 0, channels = 1;
  std::size_t pixels() const { return height * width * channels; }
};

/// Random class-preserving transforms, one draw per image:
///  - flip_crop: random left/right flip, 4px zero padding, random crop back.
///  - brightness_contrast_crop: contrast factor U[0.45,0.55], per-channel
///    brightness shift U[-0.15,0.15], then pad-and-crop.
/// Requires square images whose pixel count matches the feature width.
void augment_batch(Matrix& batch, const ImageShape& shape, AugmentKind kind,
                   std::mt19937_64& rng);

// Deterministic cores used by augment_batch (exposed for direct testing).
void flip_horizontal(std::span<double> image, const ImageShape& shape);
std::vector<double> pad_crop(std::span<const double> image, const ImageShape& shape,
                             std::size_t pad, std::size_t off_y, std::size_t off_x);
void adjust_contrast(std::span<double> image, const ImageShape& shape, double factor);
void adjust_brightness(std::span<double> image, const ImageShape& shape,
                       std::span<const double> per_channel_delta);

/// CSV dataset format: header `x0,...,x{p-1},label[,c0..c{C-1}]`; malformed
/// rows are rejected with their line number.
LabeledDataset load_csv(const std::string& path);
void save_csv(const LabeledDataset& dataset, const std::string& path);

}  // namespace cpelab::data
