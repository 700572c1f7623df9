#pragma once

#include <cstddef>

namespace olre::simd::detail {

double dot_scalar(const double* a, const double* b, std::size_t n);
void row_times_matrix_scalar(const double* x, std::size_t k, const double* m,
                             std::size_t cols, double* out);
void rows_dot_scalar(const double* rows, std::size_t n_rows, std::size_t dim,
                     const double* v, double* out);

#if defined(OLRE_HAVE_AVX2)
double dot_avx2(const double* a, const double* b, std::size_t n);
void row_times_matrix_avx2(const double* x, std::size_t k, const double* m,
                           std::size_t cols, double* out);
void rows_dot_avx2(const double* rows, std::size_t n_rows, std::size_t dim,
                   const double* v, double* out);
#endif

#if defined(OLRE_HAVE_NEON)
double dot_neon(const double* a, const double* b, std::size_t n);
void row_times_matrix_neon(const double* x, std::size_t k, const double* m,
                           std::size_t cols, double* out);
void rows_dot_neon(const double* rows, std::size_t n_rows, std::size_t dim,
                   const double* v, double* out);
#endif

}  // namespace olre::simd::detail
