#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "cpelab/eval.hpp"
#include "cpelab/rng.hpp"

using namespace cpelab;
using eval::MetricsRecord;

namespace {

samplers::PosteriorEnsemble ensemble_of(std::vector<nn::ParamVector> samples) {
  samplers::PosteriorEnsemble e;
  e.samples = std::move(samples);
  e.meta.resize(e.samples.size());
  return e;
}

Matrix random_probs(std::mt19937_64& rng, std::size_t n, std::size_t C) {
  std::uniform_real_distribution<double> uniform(0.01, 1.0);
  Matrix probs(n, C);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      probs(i, c) = uniform(rng);
      sum += probs(i, c);
    }
    for (std::size_t c = 0; c < C; ++c) probs(i, c) /= sum;
  }
  return probs;
}

MetricsRecord record(double T, double ce, std::uint64_t seed = 0) {
  MetricsRecord r;
  r.temperature = T;
  r.test_ce = ce;
  r.seed = seed;
  return r;
}

}  // namespace

TEST_CASE("posterior predictive: singleton equals the model, pairs average") {
  nn::MlpSpec spec{2, {4}, 2};
  const auto theta = nn::init_params(spec, 1.0, 3);
  Matrix x(5, 2);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  for (double& v : x.data) v = normal(rng);

  const auto single = ensemble_of({theta});
  const Matrix one = eval::posterior_predictive(spec, single, x);
  const Matrix direct = nn::softmax(nn::forward(spec, theta, x));
  CHECK(one.data == direct.data);

  // two opposite confident models average to one half
  nn::MlpSpec linear{1, {}, 2};
  nn::ParamVector up = {50.0, -50.0, 0.0, 0.0};    // class 1 logit low
  nn::ParamVector down = {-50.0, 50.0, 0.0, 0.0};  // flipped
  Matrix one_x(1, 1);
  one_x(0, 0) = 1.0;
  const Matrix avg =
      eval::posterior_predictive(linear, ensemble_of({up, down}), one_x);
  CHECK(avg(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(avg(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("posterior predictive rows sum to one; empty ensembles are rejected") {
  nn::MlpSpec spec{3, {5}, 4};
  std::vector<nn::ParamVector> samples;
  for (int k = 0; k < 7; ++k) samples.push_back(nn::init_params(spec, 1.0, 10 + k));
  Matrix x(9, 3);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal;
  for (double& v : x.data) v = normal(rng);
  const Matrix probs = eval::posterior_predictive(spec, ensemble_of(samples), x);
  for (std::size_t i = 0; i < probs.rows; ++i) {
    double sum = 0.0;
    for (std::size_t c = 0; c < probs.cols; ++c) sum += probs(i, c);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(eval::posterior_predictive(spec, ensemble_of({}), x),
                  std::invalid_argument);
}

TEST_CASE("cross entropy: uniform, constant 0.8, floor flagging") {
  Matrix uniform(4, 10, 0.1);
  const std::vector<int> labels = {0, 3, 7, 9};
  CHECK(eval::test_ce(uniform, labels) ==
        doctest::Approx(std::log(10.0)).epsilon(1e-12));

  Matrix point8(3, 2);
  for (std::size_t i = 0; i < 3; ++i) {
    point8(i, 0) = 0.8;
    point8(i, 1) = 0.2;
  }
  const std::vector<int> zeros = {0, 0, 0};
  CHECK(eval::test_ce(point8, zeros) == doctest::Approx(-std::log(0.8)).epsilon(1e-12));

  Matrix hard(2, 2);
  hard(0, 0) = 1.0;  // correct, confident
  hard(1, 0) = 1.0;  // true label has zero probability
  const std::vector<int> mixed = {0, 1};
  std::size_t floored = 0;
  const double ce = eval::test_ce(hard, mixed, &floored);
  CHECK(floored == 1);
  CHECK(ce == doctest::Approx(-0.5 * std::log(1e-12)).epsilon(1e-9));
}

TEST_CASE("accuracy with lowest-index tie break") {
  Matrix probs(2, 3);
  probs(0, 0) = 0.5;
  probs(0, 1) = 0.5;  // tie -> class 0
  probs(1, 2) = 0.9;
  probs(1, 0) = 0.1;
  const std::vector<int> a = {0, 2};
  CHECK(eval::accuracy(probs, a) == 1.0);
  const std::vector<int> b = {1, 2};
  CHECK(eval::accuracy(probs, b) == 0.5);
}

TEST_CASE("ece: calibrated zero, two-point example, single bin") {
  Matrix confident(5, 2);
  for (std::size_t i = 0; i < 5; ++i) confident(i, 0) = 1.0;
  const std::vector<int> all_zero(5, 0);
  CHECK(eval::ece(confident, all_zero, 10) == 0.0);

  // two points at confidence 0.9, one right one wrong -> |0.5 - 0.9| = 0.4
  Matrix two(2, 2);
  two(0, 0) = 0.9;
  two(0, 1) = 0.1;
  two(1, 0) = 0.9;
  two(1, 1) = 0.1;
  const std::vector<int> one_each = {0, 1};
  CHECK(eval::ece(two, one_each, 10) == doctest::Approx(0.4).epsilon(1e-12));

  // one bin: |overall accuracy - mean confidence|
  std::mt19937_64 rng(5);
  const Matrix probs = random_probs(rng, 50, 3);
  std::vector<int> labels(50);
  std::uniform_int_distribution<int> lab(0, 2);
  for (int& y : labels) y = lab(rng);
  double conf_sum = 0.0;
  for (std::size_t i = 0; i < probs.rows; ++i) {
    double best = 0.0;
    for (std::size_t c = 0; c < 3; ++c) best = std::max(best, probs(i, c));
    conf_sum += best;
  }
  const double expected =
      std::abs(eval::accuracy(probs, labels) - conf_sum / 50.0);
  CHECK(eval::ece(probs, labels, 1) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("ece vanishes once confidences equal the bin accuracies") {
  // five confidence groups, ten points each, with controlled accuracies
  const double confidences[5] = {0.52, 0.62, 0.72, 0.82, 0.92};
  const std::size_t correct_counts[5] = {6, 7, 8, 9, 10};
  const std::size_t per_group = 10, n = 50, bins = 10;

  Matrix probs(n, 2);
  std::vector<int> labels(n);
  std::size_t row = 0;
  for (std::size_t g = 0; g < 5; ++g) {
    for (std::size_t i = 0; i < per_group; ++i, ++row) {
      probs(row, 0) = confidences[g];
      probs(row, 1) = 1.0 - confidences[g];
      labels[row] = i < correct_counts[g] ? 0 : 1;  // class 0 is the prediction
    }
  }
  const double before = eval::ece(probs, labels, bins);
  CHECK(before > 0.01);  // deliberately miscalibrated

  // recalibrate: each group's confidence becomes its empirical accuracy
  Matrix recal(n, 2);
  row = 0;
  for (std::size_t g = 0; g < 5; ++g) {
    const double acc = static_cast<double>(correct_counts[g]) / per_group;
    for (std::size_t i = 0; i < per_group; ++i, ++row) {
      recal(row, 0) = acc;
      recal(row, 1) = 1.0 - acc;
    }
  }
  const double after = eval::ece(recal, labels, bins);
  CHECK(after <= before);
  CHECK(after <= 1e-12);
}

TEST_CASE("posterior-predictive CE never exceeds the mean per-model CE") {
  std::mt19937_64 rng(7);
  nn::MlpSpec spec{3, {6}, 4};
  Matrix x(20, 3);
  std::normal_distribution<double> normal;
  for (double& v : x.data) v = normal(rng);
  std::vector<int> labels(20);
  std::uniform_int_distribution<int> lab(0, 3);
  for (int& y : labels) y = lab(rng);

  std::vector<nn::ParamVector> samples;
  for (int k = 0; k < 9; ++k) samples.push_back(nn::init_params(spec, 1.3, 40 + k));
  const auto ens = ensemble_of(samples);

  const double ens_ce = eval::test_ce(eval::posterior_predictive(spec, ens, x), labels);
  double mean_ce = 0.0;
  for (const auto& theta : samples) {
    mean_ce += eval::test_ce(nn::softmax(nn::forward(spec, theta, x)), labels);
  }
  mean_ce /= static_cast<double>(samples.size());
  CHECK(ens_ce <= mean_ce + 1e-10);
}

TEST_CASE("cper: flat curve, definitional ratio, ordering, missing T=1") {
  std::vector<MetricsRecord> flat = {record(0.01, 0.7), record(0.1, 0.7),
                                     record(1.0, 0.7)};
  CHECK(eval::cper(flat) == 1.0);

  std::vector<MetricsRecord> halved = {record(0.01, 0.5), record(0.1, 1.3),
                                       record(1.0, 1.0)};
  CHECK(eval::cper(halved) == doctest::Approx(0.5));

  std::vector<MetricsRecord> mild = {record(0.01, 0.95), record(1.0, 1.0)};
  CHECK(eval::cper(mild) < 1.0);

  std::vector<MetricsRecord> missing = {record(0.01, 0.5), record(0.1, 1.0)};
  CHECK_THROWS_AS(eval::cper(missing), std::invalid_argument);
  CHECK_THROWS_AS(eval::cper(std::vector<MetricsRecord>{}), std::invalid_argument);
}

TEST_CASE("cper averages seeds before taking the ratio; per-seed variant exposed") {
  std::vector<MetricsRecord> records = {
      record(1.0, 1.0, 0), record(1.0, 2.0, 1),   // mean 1.5 at T=1
      record(0.1, 1.2, 0), record(0.1, 1.2, 1)};  // mean 1.2 at T=0.1
  CHECK(eval::cper(records) == doctest::Approx(1.2 / 1.5));
  // per-seed: seed 0 -> 1.0 (T=1 best), seed 1 -> 1.2/2.0
  CHECK(eval::cper_per_seed_mean(records) == doctest::Approx(0.5 * (1.0 + 0.6)));
}

TEST_CASE("decision grid: cell count, uniform model, label-flip symmetry") {
  nn::MlpSpec spec{2, {4}, 2};
  nn::ParamVector zeros(spec.param_count(), 0.0);
  const auto zero_ens = ensemble_of({zeros});
  const eval::GridBounds bounds{-3.0, 3.0, -3.0, 3.0};
  const auto grid = eval::decision_grid(spec, zero_ens, bounds, 101);
  CHECK(grid.prob1.size() == 10201);
  for (double v : grid.prob1) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));

  // swapping the two output classes reflects the grid probabilities
  std::vector<nn::ParamVector> samples;
  for (int k = 0; k < 3; ++k) samples.push_back(nn::init_params(spec, 1.0, 60 + k));
  std::vector<nn::ParamVector> swapped;
  for (const auto& theta : samples) {
    auto layers = nn::unflatten(spec, theta);
    auto& out = layers.back();
    for (std::size_t c = 0; c < out.weights.cols; ++c) {
      std::swap(out.weights(0, c), out.weights(1, c));
    }
    std::swap(out.bias[0], out.bias[1]);
    swapped.push_back(nn::flatten(spec, layers));
  }
  const auto g1 = eval::decision_grid(spec, ensemble_of(samples), bounds, 41);
  const auto g2 = eval::decision_grid(spec, ensemble_of(swapped), bounds, 41);
  for (std::size_t i = 0; i < g1.prob1.size(); ++i) {
    CHECK(g1.prob1[i] == doctest::Approx(1.0 - g2.prob1[i]).epsilon(1e-12));
  }

  nn::MlpSpec not2d{3, {4}, 2};
  CHECK_THROWS_AS(eval::decision_grid(not2d, zero_ens, bounds, 11),
                  std::invalid_argument);
}

TEST_CASE("boundary agreement against the diagonal Bayes rule") {
  eval::DecisionGrid exact;
  exact.resolution = 101;
  exact.bounds = {-3.0, 3.0, -3.0, 3.0};
  for (std::size_t r = 0; r < 101; ++r) {
    for (std::size_t c = 0; c < 101; ++c) {
      const double x = exact.x_at(c), y = exact.y_at(r);
      exact.prob1.push_back(x + y >= 0.0 ? 1.0 : 0.0);
    }
  }
  CHECK(eval::boundary_agreement(exact) == 1.0);

  eval::DecisionGrid uniform = exact;
  std::fill(uniform.prob1.begin(), uniform.prob1.end(), 0.5);
  // 0.5 >= 0.5 predicts class 1 everywhere; agreement = share of x+y >= 0,
  // about one half (the 101 anti-diagonal cells sit on the line up to
  // floating-point wobble)
  CHECK(eval::boundary_agreement(uniform) == doctest::Approx(0.505).epsilon(0.012));

  eval::DecisionGrid anti = exact;
  for (double& v : anti.prob1) v = 1.0 - v;
  CHECK(eval::boundary_agreement(anti) == 0.0);
}
