#include "olre/embedding.hpp"

#include <cmath>
#include <string>

namespace olre {

std::string_view to_string(Role role) noexcept {
  return role == Role::Item ? "item" : "user";
}

EmbeddingMatrix::EmbeddingMatrix(Role role, std::vector<EntityId> ids, Matrix vectors)
    : role_(role), ids_(std::move(ids)), vectors_(std::move(vectors)) {
  if (static_cast<std::size_t>(vectors_.rows()) != ids_.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                std::to_string(ids_.size()) + " ids for " + std::to_string(vectors_.rows()) +
                    " rows");
  }
  require_finite(vectors_, std::string(to_string(role_)) + " embeddings");
  index_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second) {
      throw Error(ErrorCode::DuplicateId, "id " + std::to_string(ids_[i]) + " appears twice");
    }
  }
}

std::ptrdiff_t EmbeddingMatrix::index_of(EntityId id) const {
  const auto it = index_.find(id);
  return it == index_.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
}

void require_finite(const Eigen::Ref<const Matrix>& m, std::string_view what) {
  if (!m.allFinite()) {
    throw Error(ErrorCode::NonFinite, std::string(what) + " contain NaN or Inf");
  }
}

RowPairs intersect_ids(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
  RowPairs out;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto j = b.index_of(a.ids()[i]);
    if (j >= 0) {
      out.in_a.push_back(i);
      out.in_b.push_back(static_cast<std::size_t>(j));
    }
  }
  return out;
}

Matrix gather_rows(const Matrix& source, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), source.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = source.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

}  // namespace olre
