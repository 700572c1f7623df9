#include "olre/procrustes.hpp"

#include <string>

namespace olre {

AlignmentMap ortho_procrustes(const Eigen::Ref<const Matrix>& a,
                              const Eigen::Ref<const Matrix>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorCode::DimensionMismatch,
                "alignment inputs are " + std::to_string(a.rows()) + "x" +
                    std::to_string(a.cols()) + " and " + std::to_string(b.rows()) + "x" +
                    std::to_string(b.cols()));
  }
  if (a.rows() < 1 || a.cols() < 1) {
    throw Error(ErrorCode::InvalidArgument, "alignment needs at least one row");
  }
  require_finite(a, "alignment source");
  require_finite(b, "alignment target");

  const Eigen::MatrixXd cross = b.transpose() * a;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& s = svd.singularValues();

  AlignmentMap map;
  // svd(b^T a) = U S V^T gives the left-multiplication solution U V^T; the
  // right factor for row-major embeddings is its transpose.
  map.r = svd.matrixV() * svd.matrixU().transpose();
  map.degenerate = !(s(s.size() - 1) >= 1e-12 * s(0)) || s(0) == 0.0;
  return map;
}

double orthogonality_error(const Eigen::Ref<const Matrix>& r) {
  return (r.transpose() * r - Matrix::Identity(r.cols(), r.cols())).norm();
}

}  // namespace olre
