#include "cpelab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace cpelab::eval {

Matrix posterior_predictive(const nn::MlpSpec& spec,
                            const samplers::PosteriorEnsemble& ensemble,
                            const Matrix& inputs) {
  if (ensemble.size() == 0) {
    throw std::invalid_argument("posterior_predictive: empty ensemble");
  }
  Matrix mean(inputs.rows, spec.num_classes);
  for (const nn::ParamVector& theta : ensemble.samples) {
    const Matrix probs = nn::softmax(nn::forward(spec, theta, inputs));
    for (std::size_t i = 0; i < probs.data.size(); ++i) mean.data[i] += probs.data[i];
  }
  const double inv_k = 1.0 / static_cast<double>(ensemble.size());
  for (double& v : mean.data) v *= inv_k;
  return mean;
}

double test_ce(const Matrix& probs, std::span<const int> labels, std::size_t* floored) {
  if (probs.rows != labels.size() || probs.rows == 0) {
    throw std::invalid_argument("test_ce: probs/labels shape mismatch");
  }
  constexpr double kFloor = 1e-12;
  std::size_t hit_floor = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < probs.rows; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= probs.cols) {
      throw std::invalid_argument("test_ce: label out of range");
    }
    double p = probs(i, y);
    if (p < kFloor) {
      p = kFloor;
      ++hit_floor;
    }
    total -= std::log(p);
  }
  if (floored) *floored = hit_floor;
  return total / static_cast<double>(probs.rows);
}

double accuracy(const Matrix& probs, std::span<const int> labels) {
  if (probs.rows != labels.size() || probs.rows == 0) {
    throw std::invalid_argument("accuracy: probs/labels shape mismatch");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < probs.rows; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < probs.cols; ++c) {
      if (probs(i, c) > probs(i, best)) best = c;  // strict: lowest index wins ties
    }
    if (static_cast<int>(best) == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(probs.rows);
}

double ece(const Matrix& probs, std::span<const int> labels, std::size_t n_bins) {
  if (n_bins < 1) throw std::invalid_argument("ece: n_bins must be >= 1");
  if (probs.rows != labels.size() || probs.rows == 0) {
    throw std::invalid_argument("ece: probs/labels shape mismatch");
  }
  std::vector<double> bin_conf(n_bins, 0.0), bin_acc(n_bins, 0.0);
  std::vector<std::size_t> bin_count(n_bins, 0);
  for (std::size_t i = 0; i < probs.rows; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < probs.cols; ++c) {
      if (probs(i, c) > probs(i, best)) best = c;
    }
    const double conf = probs(i, best);
    std::size_t bin = static_cast<std::size_t>(conf * static_cast<double>(n_bins));
    bin = std::min(bin, n_bins - 1);  // confidence 1.0 lands in the last bin
    bin_conf[bin] += conf;
    bin_acc[bin] += (static_cast<int>(best) == labels[i]) ? 1.0 : 0.0;
    ++bin_count[bin];
  }
  double total = 0.0;
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (bin_count[b] == 0) continue;
    const double w = static_cast<double>(bin_count[b]) / static_cast<double>(probs.rows);
    const double count = static_cast<double>(bin_count[b]);
    total += w * std::abs(bin_acc[b] / count - bin_conf[b] / count);
  }
  return total;
}

namespace {

// seed-averaged CE per temperature, keyed by T
std::map<double, double> mean_ce_by_temperature(std::span<const MetricsRecord> records) {
  std::map<double, std::pair<double, std::size_t>> sums;
  for (const MetricsRecord& r : records) {
    auto& [sum, count] = sums[r.temperature];
    sum += r.test_ce;
    ++count;
  }
  std::map<double, double> means;
  for (const auto& [t, sc] : sums) means[t] = sc.first / static_cast<double>(sc.second);
  return means;
}

}  // namespace

double cper(std::span<const MetricsRecord> records) {
  if (records.empty()) throw std::invalid_argument("cper: no records");
  const auto means = mean_ce_by_temperature(records);
  const auto at_one = means.find(1.0);
  if (at_one == means.end()) {
    throw std::invalid_argument("cper: temperature grid must contain T=1");
  }
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [t, ce] : means) best = std::min(best, ce);
  const double ratio = best / at_one->second;
  return std::clamp(ratio, std::numeric_limits<double>::min(), 1.0);
}

double cper_per_seed_mean(std::span<const MetricsRecord> records) {
  if (records.empty()) throw std::invalid_argument("cper: no records");
  std::map<std::uint64_t, std::vector<MetricsRecord>> by_seed;
  for (const MetricsRecord& r : records) by_seed[r.seed].push_back(r);
  double acc = 0.0;
  for (const auto& [seed, recs] : by_seed) acc += cper(recs);
  return acc / static_cast<double>(by_seed.size());
}

double DecisionGrid::x_at(std::size_t col) const {
  if (resolution == 1) return bounds.xmin;
  return bounds.xmin + (bounds.xmax - bounds.xmin) * static_cast<double>(col) /
                           static_cast<double>(resolution - 1);
}

double DecisionGrid::y_at(std::size_t row) const {
  if (resolution == 1) return bounds.ymin;
  return bounds.ymin + (bounds.ymax - bounds.ymin) * static_cast<double>(row) /
                           static_cast<double>(resolution - 1);
}

DecisionGrid decision_grid(const nn::MlpSpec& spec,
                           const samplers::PosteriorEnsemble& ensemble,
                           const GridBounds& bounds, std::size_t resolution) {
  if (spec.input_dim != 2) {
    throw std::invalid_argument("decision_grid: needs a 2D-input model");
  }
  if (spec.num_classes != 2) {
    throw std::invalid_argument("decision_grid: needs a binary classifier");
  }
  if (resolution < 1) throw std::invalid_argument("decision_grid: resolution must be >= 1");

  DecisionGrid grid;
  grid.resolution = resolution;
  grid.bounds = bounds;
  Matrix points(resolution * resolution, 2);
  for (std::size_t r = 0; r < resolution; ++r) {
    for (std::size_t c = 0; c < resolution; ++c) {
      grid.prob1.push_back(0.0);
      points(r * resolution + c, 0) = grid.x_at(c);
      points(r * resolution + c, 1) = grid.y_at(r);
    }
  }
  const Matrix probs = posterior_predictive(spec, ensemble, points);
  for (std::size_t i = 0; i < grid.prob1.size(); ++i) grid.prob1[i] = probs(i, 1);
  return grid;
}

double boundary_agreement(const DecisionGrid& grid,
                          const std::function<int(double, double)>& rule) {
  if (grid.prob1.empty()) throw std::invalid_argument("boundary_agreement: empty grid");
  const auto bayes = [](double x, double y) { return x + y >= 0.0 ? 1 : 0; };
  std::size_t match = 0;
  for (std::size_t r = 0; r < grid.resolution; ++r) {
    for (std::size_t c = 0; c < grid.resolution; ++c) {
      const double x = grid.x_at(c);
      const double y = grid.y_at(r);
      const int predicted = grid.prob1[r * grid.resolution + c] >= 0.5 ? 1 : 0;
      const int reference = rule ? rule(x, y) : bayes(x, y);
      if (predicted == reference) ++match;
    }
  }
  return static_cast<double>(match) / static_cast<double>(grid.prob1.size());
}

}  // namespace cpelab::eval
