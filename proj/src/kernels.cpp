#include "cpelab/kernels.hpp"

#include <cstdlib>
#include <string_view>

namespace cpelab::kernels {

namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum_squares_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale_scalar(double a, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

void matvec_scalar(const double* W, const double* x, const double* bias,
                   double* out, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    out[r] = (bias ? bias[r] : 0.0) + dot_scalar(W + r * cols, x, cols);
  }
}

void matvec_t_scalar(const double* W, const double* g, double* out,
                     std::size_t rows, std::size_t cols) {
  for (std::size_t c = 0; c < cols; ++c) out[c] = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    axpy_scalar(g[r], W + r * cols, out, cols);
  }
}

void rank1_update_scalar(double* W, const double* g, const double* x,
                         std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    axpy_scalar(g[r], x, W + r * cols, cols);
  }
}

constexpr KernelTable kScalarTable = {
    "scalar",        dot_scalar,      sum_squares_scalar,  axpy_scalar,
    scale_scalar,    matvec_scalar,   matvec_t_scalar,     rank1_update_scalar,
};

const KernelTable* resolve_active() {
  const char* env = std::getenv("CPELAB_KERNELS");
  const std::string_view wanted = env ? std::string_view{env} : std::string_view{};
  if (wanted == "scalar") return &kScalarTable;
  const KernelTable* wide = avx2_kernels();
  if (wanted == "avx2") {
    // Explicit request: fall back loudly rather than crash on an old CPU.
    return wide ? wide : &kScalarTable;
  }
  return wide ? wide : &kScalarTable;
}

}  // namespace

const KernelTable& scalar_kernels() { return kScalarTable; }

#if !defined(CPELAB_HAVE_AVX2_TU)
const KernelTable* avx2_kernels() { return nullptr; }
#endif

const KernelTable& active() {
  static const KernelTable* table = resolve_active();
  return *table;
}

std::string_view backend_name() { return active().name; }

}  // namespace cpelab::kernels
