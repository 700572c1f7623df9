#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace olre::simd {

enum class Isa { Scalar, Avx2, Neon };

std::string_view to_string(Isa isa) noexcept;

// Inner loops of the pipeline. Every ISA variant of `row_times_matrix` uses a
// single fused multiply-add per output element per input element, accumulated
// in input order, so all variants are bit-identical to the scalar reference.
// `dot` and `rows_dot` reassociate the reduction and agree with the scalar
// reference only to rounding.
struct KernelTable {
  Isa isa;

  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);

  // out[j] = sum_k x[k] * m[k * cols + j] for j < cols; m is row-major k x cols.
  void (*row_times_matrix)(const double* x, std::size_t k, const double* m,
                           std::size_t cols, double* out);

  // out[i] = dot(rows + i * dim, v) for i < n_rows.
  void (*rows_dot)(const double* rows, std::size_t n_rows, std::size_t dim,
                   const double* v, double* out);
};

const KernelTable& scalar_kernels() noexcept;

/// ISAs compiled into this binary and supported by the running CPU.
std::vector<Isa> available_isas();

/// Table for `isa`; throws InvalidArgument when the ISA is unavailable.
const KernelTable& kernels_for(Isa isa);

/// Best available table, chosen once per process. Setting the environment
/// variable OLRE_SIMD=scalar forces the reference kernels.
const KernelTable& active_kernels();

}  // namespace olre::simd
