#include <cmath>

#include "kernels_impl.hpp"

namespace olre::simd::detail {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc = std::fma(a[i], b[i], acc);
  return acc;
}

void row_times_matrix_scalar(const double* x, std::size_t k, const double* m,
                             std::size_t cols, double* out) {
  for (std::size_t j = 0; j < cols; ++j) out[j] = 0.0;
  for (std::size_t r = 0; r < k; ++r) {
    const double xr = x[r];
    const double* mr = m + r * cols;
    for (std::size_t j = 0; j < cols; ++j) out[j] = std::fma(xr, mr[j], out[j]);
  }
}

void rows_dot_scalar(const double* rows, std::size_t n_rows, std::size_t dim,
                     const double* v, double* out) {
  for (std::size_t i = 0; i < n_rows; ++i) out[i] = dot_scalar(rows + i * dim, v, dim);
}

}  // namespace olre::simd::detail
