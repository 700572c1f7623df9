#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "olre/error.hpp"

namespace olre {

/// Dense row-major storage used for embeddings and small transforms.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using EntityId = std::uint64_t;

enum class Role : std::uint8_t { Item = 0, User = 1 };

std::string_view to_string(Role role) noexcept;

/// Id-keyed set of fixed-width vectors: either the item table T or the user
/// table W of one training run. Row i of `vectors()` belongs to `ids()[i]`.
///
/// Construction validates the invariants (unique ids, row count matches,
/// finite entries), so every live instance is well formed.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(Role role, std::vector<EntityId> ids, Matrix vectors);

  Role role() const noexcept { return role_; }
  const std::vector<EntityId>& ids() const noexcept { return ids_; }
  const Matrix& vectors() const noexcept { return vectors_; }
  std::size_t rows() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(vectors_.cols()); }
  bool empty() const noexcept { return ids_.empty(); }

  std::span<const double> row(std::size_t i) const noexcept {
    return {vectors_.data() + i * dim(), dim()};
  }

  /// Row index for `id`, or -1 when absent.
  std::ptrdiff_t index_of(EntityId id) const;

 private:
  Role role_ = Role::Item;
  std::vector<EntityId> ids_;
  Matrix vectors_;
  std::unordered_map<EntityId, std::size_t> index_;
};

/// Throws NonFinite if any entry is NaN or infinite.
void require_finite(const Eigen::Ref<const Matrix>& m, std::string_view what);

/// Row positions of ids present in both matrices, ordered as they appear in `a`.
struct RowPairs {
  std::vector<std::size_t> in_a;
  std::vector<std::size_t> in_b;

  std::size_t size() const noexcept { return in_a.size(); }
};

RowPairs intersect_ids(const EmbeddingMatrix& a, const EmbeddingMatrix& b);

/// Gathers the listed rows into a dense matrix.
Matrix gather_rows(const Matrix& source, std::span<const std::size_t> rows);

}  // namespace olre
