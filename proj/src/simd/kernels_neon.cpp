#include <arm_neon.h>

#include <cmath>

#include "kernels_impl.hpp"

namespace olre::simd::detail {

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc = std::fma(a[i], b[i], acc);
  return acc;
}

void row_times_matrix_neon(const double* x, std::size_t k, const double* m,
                           std::size_t cols, double* out) {
  std::size_t j = 0;
  for (; j + 8 <= cols; j += 8) {
    float64x2_t o0 = vdupq_n_f64(0.0);
    float64x2_t o1 = vdupq_n_f64(0.0);
    float64x2_t o2 = vdupq_n_f64(0.0);
    float64x2_t o3 = vdupq_n_f64(0.0);
    for (std::size_t r = 0; r < k; ++r) {
      const float64x2_t xr = vdupq_n_f64(x[r]);
      const double* mr = m + r * cols + j;
      o0 = vfmaq_f64(o0, xr, vld1q_f64(mr));
      o1 = vfmaq_f64(o1, xr, vld1q_f64(mr + 2));
      o2 = vfmaq_f64(o2, xr, vld1q_f64(mr + 4));
      o3 = vfmaq_f64(o3, xr, vld1q_f64(mr + 6));
    }
    vst1q_f64(out + j, o0);
    vst1q_f64(out + j + 2, o1);
    vst1q_f64(out + j + 4, o2);
    vst1q_f64(out + j + 6, o3);
  }
  for (; j < cols; ++j) {
    double o = 0.0;
    for (std::size_t r = 0; r < k; ++r) o = std::fma(x[r], m[r * cols + j], o);
    out[j] = o;
  }
}

void rows_dot_neon(const double* rows, std::size_t n_rows, std::size_t dim,
                   const double* v, double* out) {
  for (std::size_t i = 0; i < n_rows; ++i) out[i] = dot_neon(rows + i * dim, v, dim);
}

}  // namespace olre::simd::detail
