#include <cstdlib>
#include <string>

#include "kernels_impl.hpp"
#include "olre/error.hpp"
#include "olre/simd/kernels.hpp"

namespace olre::simd {

namespace {

constexpr KernelTable kScalar{Isa::Scalar, detail::dot_scalar, detail::row_times_matrix_scalar,
                              detail::rows_dot_scalar};
#if defined(OLRE_HAVE_AVX2)
constexpr KernelTable kAvx2{Isa::Avx2, detail::dot_avx2, detail::row_times_matrix_avx2,
                            detail::rows_dot_avx2};
#endif
#if defined(OLRE_HAVE_NEON)
constexpr KernelTable kNeon{Isa::Neon, detail::dot_neon, detail::row_times_matrix_neon,
                            detail::rows_dot_neon};
#endif

bool cpu_has(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return true;
    case Isa::Avx2:
#if defined(OLRE_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::Neon:
#if defined(OLRE_HAVE_NEON)
      return true;  // mandatory on AArch64
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& select() {
  if (const char* env = std::getenv("OLRE_SIMD"); env && std::string(env) == "scalar") {
    return kScalar;
  }
  const auto isas = available_isas();
  return kernels_for(isas.back());
}

}  // namespace

std::string_view to_string(Isa isa) noexcept {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
    case Isa::Neon: return "neon";
  }
  return "unknown";
}

const KernelTable& scalar_kernels() noexcept { return kScalar; }

std::vector<Isa> available_isas() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::Scalar, Isa::Avx2, Isa::Neon}) {
    if (cpu_has(isa)) out.push_back(isa);
  }
  return out;
}

const KernelTable& kernels_for(Isa isa) {
  if (!cpu_has(isa)) {
    throw Error(ErrorCode::InvalidArgument,
                "SIMD variant '" + std::string(to_string(isa)) + "' is not available");
  }
  switch (isa) {
#if defined(OLRE_HAVE_AVX2)
    case Isa::Avx2: return kAvx2;
#endif
#if defined(OLRE_HAVE_NEON)
    case Isa::Neon: return kNeon;
#endif
    default: return kScalar;
  }
}

const KernelTable& active_kernels() {
  static const KernelTable& table = select();
  return table;
}

}  // namespace olre::simd
