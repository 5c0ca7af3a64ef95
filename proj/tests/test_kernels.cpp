#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "cpelab/kernels.hpp"

using namespace cpelab;

namespace {

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

// long double reference; bounds both backends independently
long double dot_ref(const std::vector<double>& a, const std::vector<double>& b) {
  long double acc = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += static_cast<long double>(a[i]) * static_cast<long double>(b[i]);
  }
  return acc;
}

double abs_bound(const std::vector<double>& a, const std::vector<double>& b) {
  long double acc = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += std::abs(static_cast<long double>(a[i]) * b[i]);
  }
  return static_cast<double>(acc) * 1e-13 + 1e-14;
}

}  // namespace

TEST_CASE("scalar dot matches long double reference") {
  std::mt19937_64 rng(11);
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 16u, 33u, 1000u}) {
    const auto a = random_vec(rng, n);
    const auto b = random_vec(rng, n);
    const double got = kernels::scalar_kernels().dot(a.data(), b.data(), n);
    CHECK(std::abs(got - static_cast<double>(dot_ref(a, b))) <= abs_bound(a, b));
  }
}

TEST_CASE("avx2 kernels agree with scalar reference") {
  const kernels::KernelTable* wide = kernels::avx2_kernels();
  if (!wide) {
    MESSAGE("AVX2 not available on this host; skipping equivalence checks");
    return;
  }
  const kernels::KernelTable& ref = kernels::scalar_kernels();
  std::mt19937_64 rng(7);

  // odd lengths exercise the tail loops
  for (std::size_t n : {1u, 2u, 3u, 4u, 5u, 7u, 8u, 9u, 15u, 31u, 64u, 129u, 1023u}) {
    const auto a = random_vec(rng, n);
    const auto b = random_vec(rng, n);

    CHECK(std::abs(wide->dot(a.data(), b.data(), n) - ref.dot(a.data(), b.data(), n)) <=
          abs_bound(a, b));
    CHECK(std::abs(wide->sum_squares(a.data(), n) - ref.sum_squares(a.data(), n)) <=
          abs_bound(a, a));

    auto y1 = b, y2 = b;
    ref.axpy(0.37, a.data(), y1.data(), n);
    wide->axpy(0.37, a.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-14));

    auto s1 = a, s2 = a;
    ref.scale(-1.75, s1.data(), n);
    wide->scale(-1.75, s2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(s1[i] == s2[i]);
  }
}

TEST_CASE("avx2 matrix kernels agree with scalar reference") {
  const kernels::KernelTable* wide = kernels::avx2_kernels();
  if (!wide) return;
  const kernels::KernelTable& ref = kernels::scalar_kernels();
  std::mt19937_64 rng(23);

  for (auto [rows, cols] : {std::pair<std::size_t, std::size_t>{1, 1},
                            {3, 5},
                            {20, 2},
                            {2, 20},
                            {17, 33},
                            {10, 784}}) {
    const auto W = random_vec(rng, rows * cols);
    const auto x = random_vec(rng, cols);
    const auto bias = random_vec(rng, rows);
    const auto g = random_vec(rng, rows);

    std::vector<double> out1(rows), out2(rows);
    ref.matvec(W.data(), x.data(), bias.data(), out1.data(), rows, cols);
    wide->matvec(W.data(), x.data(), bias.data(), out2.data(), rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      CHECK(out1[r] == doctest::Approx(out2[r]).epsilon(1e-12));
    }

    std::vector<double> t1(cols), t2(cols);
    ref.matvec_t(W.data(), g.data(), t1.data(), rows, cols);
    wide->matvec_t(W.data(), g.data(), t2.data(), rows, cols);
    for (std::size_t c = 0; c < cols; ++c) {
      CHECK(t1[c] == doctest::Approx(t2[c]).epsilon(1e-12));
    }

    auto W1 = W, W2 = W;
    ref.rank1_update(W1.data(), g.data(), x.data(), rows, cols);
    wide->rank1_update(W2.data(), g.data(), x.data(), rows, cols);
    for (std::size_t i = 0; i < W.size(); ++i) {
      CHECK(W1[i] == doctest::Approx(W2[i]).epsilon(1e-13));
    }
  }
}

TEST_CASE("active backend is one of the registered tables") {
  const auto name = kernels::backend_name();
  CHECK((name == "scalar" || name == "avx2"));
  // resolution is stable within a process
  CHECK(kernels::backend_name() == name);
  CHECK(&kernels::active() == &kernels::active());
}

TEST_CASE("matvec with null bias is a plain product") {
  const double W[6] = {1, 2, 3, 4, 5, 6};
  const double x[3] = {1, 0, -1};
  double out[2];
  kernels::matvec(W, x, nullptr, out, 2, 3);
  CHECK(out[0] == doctest::Approx(-2.0));
  CHECK(out[1] == doctest::Approx(-2.0));
}
