#pragma once

#include <string>

#include "olre/embedding.hpp"

namespace olre {

/// Orthogonal e x e matrix applied on the right of one run's SVD-space
/// embeddings to express them in the standard space.
struct AlignmentMap {
  Matrix r;
  std::string source_run;
  std::string target_run;
  // Set when the cross-covariance is rank deficient (min/max singular value
  // below 1e-12): r is still optimal but not unique.
  bool degenerate = false;
};

/// Orthogonal r minimising ||a * r - b||_F, from the SVD of b^T a.
/// Reflections (det r = -1) are allowed.
AlignmentMap ortho_procrustes(const Eigen::Ref<const Matrix>& a,
                              const Eigen::Ref<const Matrix>& b);

/// ||r^T r - I||_F
double orthogonality_error(const Eigen::Ref<const Matrix>& r);

}  // namespace olre
