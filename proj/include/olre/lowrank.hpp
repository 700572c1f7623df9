#pragma once

#include <string>

#include "olre/embedding.hpp"

namespace olre {

enum class RankPolicy { Strict, Truncate };

std::string_view to_string(RankPolicy policy) noexcept;
RankPolicy parse_rank_policy(std::string_view text);

struct LowRankOptions {
  RankPolicy policy = RankPolicy::Strict;
  // Singular values at or below threshold * S_max count as zero.
  double relative_threshold = 1e-12;
};

/// Thin QR with the nonnegative-diagonal sign convention on R.
/// For an n x e input, q is n x k and r is k x e with k = min(n, e).
struct ThinQr {
  Matrix q;
  Matrix r;
};

ThinQr qr_thin(const Eigen::Ref<const Matrix>& a);

/// R factor of a thin QR (e x e, nonnegative diagonal) computed by stacking
/// row blocks, so Q is never formed and the input is read once in row order.
/// Inputs with fewer than e rows yield zero rows at the bottom of R.
Matrix r_factor(const Eigen::Ref<const Matrix>& a, Eigen::Index block_rows = 4096);

/// The small factors behind a transform: R_T, R_W, and the SVD
/// R_T R_W^T = U diag(spectrum) V^T after sign canonicalisation.
struct FactoredDecomposition {
  Matrix r_items;
  Matrix r_users;
  Matrix u;
  Vector spectrum;
  Matrix v;
};

FactoredDecomposition factor_score_space(const Eigen::Ref<const Matrix>& items,
                                         const Eigen::Ref<const Matrix>& users);

/// Pair of right factors that rotate a factorised score space T W^T into its
/// principal coordinates: T * m_items = U S^{1/2}, W * m_users = V S^{1/2}.
///
/// Under RankPolicy::Truncate the factors are e x e' with e' = spectrum.size().
struct SvdTransform {
  Matrix m_items;
  Matrix m_users;
  Vector spectrum;
  std::string run_id;
  // Components removed by truncation (always 0 under the strict policy).
  std::size_t dropped = 0;

  std::size_t input_dim() const noexcept { return static_cast<std::size_t>(m_items.rows()); }
  std::size_t output_dim() const noexcept { return static_cast<std::size_t>(m_items.cols()); }
};

SvdTransform low_rank_svd_trans(const Eigen::Ref<const Matrix>& items,
                                const Eigen::Ref<const Matrix>& users,
                                const LowRankOptions& options = {});

SvdTransform low_rank_svd_trans(const EmbeddingMatrix& items, const EmbeddingMatrix& users,
                                const LowRankOptions& options = {}, std::string run_id = {});

/// rows * m, one row at a time through the active SIMD kernel.
Matrix apply_transform(const Eigen::Ref<const Matrix>& rows, const Eigen::Ref<const Matrix>& m);

EmbeddingMatrix apply_transform(const EmbeddingMatrix& emb, const Eigen::Ref<const Matrix>& m);

}  // namespace olre
