#pragma once

#include <cstddef>
#include <string_view>

namespace cpelab::kernels {

/// The vectorizable primitives behind the math modules. Every entry has a
/// scalar reference implementation; wider backends must agree with it up to
/// floating-point reassociation (see tests/test_kernels.cpp).
///
/// Conventions: matrices are row-major, W is rows x cols.
struct KernelTable {
  const char* name;
  // sum_i a[i]*b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // sum_i x[i]*x[i]
  double (*sum_squares)(const double* x, std::size_t n);
  // y[i] += a*x[i]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // x[i] *= a
  void (*scale)(double a, double* x, std::size_t n);
  // out[r] = bias[r] + sum_c W[r,c]*x[c]   (bias may be null)
  void (*matvec)(const double* W, const double* x, const double* bias,
                 double* out, std::size_t rows, std::size_t cols);
  // out[c] = sum_r W[r,c]*g[r]             (out is overwritten)
  void (*matvec_t)(const double* W, const double* g, double* out,
                   std::size_t rows, std::size_t cols);
  // W[r,c] += g[r]*x[c]
  void (*rank1_update)(double* W, const double* g, const double* x,
                       std::size_t rows, std::size_t cols);
};

/// Scalar reference kernels; always available.
const KernelTable& scalar_kernels();

/// AVX2+FMA kernels, or nullptr when the build or the CPU lacks them.
const KernelTable* avx2_kernels();

/// Active table, resolved once per process: the widest supported backend,
/// unless overridden with CPELAB_KERNELS=scalar|avx2 in the environment.
const KernelTable& active();

std::string_view backend_name();

inline double dot(const double* a, const double* b, std::size_t n) {
  return active().dot(a, b, n);
}
inline double sum_squares(const double* x, std::size_t n) {
  return active().sum_squares(x, n);
}
inline void axpy(double a, const double* x, double* y, std::size_t n) {
  active().axpy(a, x, y, n);
}
inline void scale(double a, double* x, std::size_t n) {
  active().scale(a, x, n);
}
inline void matvec(const double* W, const double* x, const double* bias,
                   double* out, std::size_t rows, std::size_t cols) {
  active().matvec(W, x, bias, out, rows, cols);
}
inline void matvec_t(const double* W, const double* g, double* out,
                     std::size_t rows, std::size_t cols) {
  active().matvec_t(W, g, out, rows, cols);
}
inline void rank1_update(double* W, const double* g, const double* x,
                         std::size_t rows, std::size_t cols) {
  active().rank1_update(W, g, x, rows, cols);
}

}  // namespace cpelab::kernels
