// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include <immintrin.h>

#include <cmath>

#include "kernels_impl.hpp"

namespace olre::simd::detail {

namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

}  // namespace

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  __m256d acc2 = _mm256_setzero_pd();
  __m256d acc3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    acc2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), acc2);
    acc3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), acc3);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(_mm256_add_pd(acc0, acc1), _mm256_add_pd(acc2, acc3)));
  for (; i < n; ++i) acc = std::fma(a[i], b[i], acc);
  return acc;
}

void row_times_matrix_avx2(const double* x, std::size_t k, const double* m,
                           std::size_t cols, double* out) {
  std::size_t j = 0;
  for (; j + 16 <= cols; j += 16) {
    __m256d o0 = _mm256_setzero_pd();
    __m256d o1 = _mm256_setzero_pd();
    __m256d o2 = _mm256_setzero_pd();
    __m256d o3 = _mm256_setzero_pd();
    for (std::size_t r = 0; r < k; ++r) {
      const __m256d xr = _mm256_broadcast_sd(x + r);
      const double* mr = m + r * cols + j;
      o0 = _mm256_fmadd_pd(xr, _mm256_loadu_pd(mr), o0);
      o1 = _mm256_fmadd_pd(xr, _mm256_loadu_pd(mr + 4), o1);
      o2 = _mm256_fmadd_pd(xr, _mm256_loadu_pd(mr + 8), o2);
      o3 = _mm256_fmadd_pd(xr, _mm256_loadu_pd(mr + 12), o3);
    }
    _mm256_storeu_pd(out + j, o0);
    _mm256_storeu_pd(out + j + 4, o1);
    _mm256_storeu_pd(out + j + 8, o2);
    _mm256_storeu_pd(out + j + 12, o3);
  }
  for (; j + 4 <= cols; j += 4) {
    __m256d o = _mm256_setzero_pd();
    for (std::size_t r = 0; r < k; ++r) {
      o = _mm256_fmadd_pd(_mm256_broadcast_sd(x + r), _mm256_loadu_pd(m + r * cols + j), o);
    }
    _mm256_storeu_pd(out + j, o);
  }
  for (; j < cols; ++j) {
    double o = 0.0;
    for (std::size_t r = 0; r < k; ++r) o = std::fma(x[r], m[r * cols + j], o);
    out[j] = o;
  }
}

void rows_dot_avx2(const double* rows, std::size_t n_rows, std::size_t dim,
                   const double* v, double* out) {
  for (std::size_t i = 0; i < n_rows; ++i) out[i] = dot_avx2(rows + i * dim, v, dim);
}

}  // namespace olre::simd::detail
