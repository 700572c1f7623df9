#include "olre/lowrank.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "olre/simd/kernels.hpp"

namespace olre {

namespace {

using ColMatrix = Eigen::MatrixXd;

// Flip rows of r (and matching columns of q, if given) so diag(r) >= 0.
void canonicalize_signs(Matrix& r, Matrix* q) {
  const Eigen::Index k = std::min(r.rows(), r.cols());
  for (Eigen::Index i = 0; i < k; ++i) {
    if (r(i, i) < 0.0) {
      r.row(i) *= -1.0;
      if (q != nullptr) q->col(i) *= -1.0;
    }
  }
}

Matrix upper_part(const ColMatrix& packed, Eigen::Index rows, Eigen::Index cols) {
  Matrix r = Matrix::Zero(rows, cols);
  const Eigen::Index k = std::min(rows, packed.rows());
  r.topRows(k) = packed.topRows(k).triangularView<Eigen::Upper>();
  return r;
}

}  // namespace

std::string_view to_string(RankPolicy policy) noexcept {
  return policy == RankPolicy::Strict ? "strict" : "truncate";
}

RankPolicy parse_rank_policy(std::string_view text) {
  if (text == "strict") return RankPolicy::Strict;
  if (text == "truncate") return RankPolicy::Truncate;
  throw Error(ErrorCode::InvalidArgument, "unknown rank policy '" + std::string(text) + "'");
}

ThinQr qr_thin(const Eigen::Ref<const Matrix>& a) {
  require_finite(a, "QR input");
  if (a.rows() < 1 || a.cols() < 1) {
    throw Error(ErrorCode::InvalidArgument, "QR input must be non-empty");
  }
  const Eigen::Index k = std::min(a.rows(), a.cols());
  const ColMatrix dense = a;
  Eigen::HouseholderQR<ColMatrix> qr(dense);
  ThinQr out;
  out.q = qr.householderQ() * ColMatrix::Identity(a.rows(), k);
  out.r = upper_part(qr.matrixQR(), k, a.cols());
  canonicalize_signs(out.r, &out.q);
  return out;
}

Matrix r_factor(const Eigen::Ref<const Matrix>& a, Eigen::Index block_rows) {
  require_finite(a, "QR input");
  const Eigen::Index n = a.rows();
  const Eigen::Index e = a.cols();
  if (e < 1) throw Error(ErrorCode::InvalidArgument, "QR input must have at least one column");
  block_rows = std::max(block_rows, e);

  // Invariant: `carried` rows of work.topRows hold the R of all rows seen so far.
  ColMatrix work(e + block_rows, e);
  Eigen::Index carried = 0;
  for (Eigen::Index start = 0; start < n; start += block_rows) {
    const Eigen::Index len = std::min(block_rows, n - start);
    work.middleRows(carried, len) = a.middleRows(start, len);
    const Eigen::Index stacked = carried + len;
    Eigen::Ref<ColMatrix> stack = work.topRows(stacked);
    Eigen::HouseholderQR<Eigen::Ref<ColMatrix>> qr(stack);  // factors in place
    carried = std::min(stacked, e);
    for (Eigen::Index j = 0; j < e; ++j) {
      for (Eigen::Index i = j + 1; i < carried; ++i) work(i, j) = 0.0;
    }
  }
  Matrix r = Matrix::Zero(e, e);
  r.topRows(carried) = work.topRows(carried);
  canonicalize_signs(r, nullptr);
  return r;
}

FactoredDecomposition factor_score_space(const Eigen::Ref<const Matrix>& items,
                                         const Eigen::Ref<const Matrix>& users) {
  if (items.cols() != users.cols()) {
    throw Error(ErrorCode::DimensionMismatch,
                "item width " + std::to_string(items.cols()) + " != user width " +
                    std::to_string(users.cols()));
  }
  FactoredDecomposition f;
  f.r_items = r_factor(items);
  f.r_users = r_factor(users);
  const ColMatrix core = f.r_items * f.r_users.transpose();
  Eigen::JacobiSVD<ColMatrix> svd(core, Eigen::ComputeFullU | Eigen::ComputeFullV);
  f.u = svd.matrixU();
  f.v = svd.matrixV();
  f.spectrum = svd.singularValues();

  // Largest-magnitude entry of each U column is made positive; V follows.
  for (Eigen::Index j = 0; j < f.u.cols(); ++j) {
    Eigen::Index arg = 0;
    f.u.col(j).cwiseAbs().maxCoeff(&arg);
    if (f.u(arg, j) < 0.0) {
      f.u.col(j) *= -1.0;
      f.v.col(j) *= -1.0;
    }
  }
  return f;
}

SvdTransform low_rank_svd_trans(const Eigen::Ref<const Matrix>& items,
                                const Eigen::Ref<const Matrix>& users,
                                const LowRankOptions& options) {
  if (items.cols() != users.cols()) {
    throw Error(ErrorCode::DimensionMismatch,
                "item width " + std::to_string(items.cols()) + " != user width " +
                    std::to_string(users.cols()));
  }
  require_finite(items, "item embeddings");
  require_finite(users, "user embeddings");
  const FactoredDecomposition f = factor_score_space(items, users);
  const Eigen::Index e = f.spectrum.size();

  const double s_max = e > 0 ? f.spectrum(0) : 0.0;
  const double tau = options.relative_threshold * s_max;
  Eigen::Index kept = 0;
  while (kept < e && f.spectrum(kept) > tau && f.spectrum(kept) > 0.0) ++kept;

  if (kept == 0) {
    throw Error(ErrorCode::RankDeficient, "score matrix is numerically zero");
  }
  if (kept < e && options.policy == RankPolicy::Strict) {
    throw Error(ErrorCode::RankDeficient,
                std::to_string(e - kept) + " of " + std::to_string(e) +
                    " singular values fall below " + std::to_string(options.relative_threshold) +
                    " * S_max");
  }

  const Vector inv_sqrt = f.spectrum.head(kept).cwiseSqrt().cwiseInverse();
  SvdTransform t;
  t.m_items = f.r_users.transpose() * f.v.leftCols(kept) * inv_sqrt.asDiagonal();
  t.m_users = f.r_items.transpose() * f.u.leftCols(kept) * inv_sqrt.asDiagonal();
  t.spectrum = f.spectrum.head(kept);
  t.dropped = static_cast<std::size_t>(e - kept);
  return t;
}

SvdTransform low_rank_svd_trans(const EmbeddingMatrix& items, const EmbeddingMatrix& users,
                                const LowRankOptions& options, std::string run_id) {
  if (items.role() != Role::Item || users.role() != Role::User) {
    throw Error(ErrorCode::RoleMismatch, "expected an item matrix and a user matrix");
  }
  SvdTransform t = low_rank_svd_trans(items.vectors(), users.vectors(), options);
  t.run_id = std::move(run_id);
  return t;
}

Matrix apply_transform(const Eigen::Ref<const Matrix>& rows, const Eigen::Ref<const Matrix>& m) {
  if (rows.cols() != m.rows()) {
    throw Error(ErrorCode::DimensionMismatch,
                "embedding width " + std::to_string(rows.cols()) + " != transform rows " +
                    std::to_string(m.rows()));
  }
  const Matrix dense_m = m;  // contiguous copy; the kernel expects stride == cols
  Matrix out(rows.rows(), m.cols());
  const auto& k = simd::active_kernels();
  const auto width = static_cast<std::size_t>(rows.cols());
  const auto cols = static_cast<std::size_t>(m.cols());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    k.row_times_matrix(rows.data() + i * rows.outerStride(), width, dense_m.data(), cols,
                       out.data() + i * m.cols());
  }
  return out;
}

EmbeddingMatrix apply_transform(const EmbeddingMatrix& emb, const Eigen::Ref<const Matrix>& m) {
  return EmbeddingMatrix(emb.role(), emb.ids(), apply_transform(emb.vectors(), m));
}

}  // namespace olre
