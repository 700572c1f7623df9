#pragma once

#include <cmath>
#include <numeric>
#include <random>

#include "olre/embedding.hpp"
#include "oracle/dense_svd.hpp"

namespace olre::test {

inline Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                       double sd = 1.0) {
  std::normal_distribution<double> normal(0.0, sd);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

/// Random orthogonal matrix by modified Gram-Schmidt on a Gaussian matrix.
inline Matrix random_orthogonal(Eigen::Index e, std::mt19937_64& rng) {
  Matrix q = gaussian(e, e, rng);
  for (Eigen::Index j = 0; j < e; ++j) {
    for (Eigen::Index k = 0; k < j; ++k) q.col(j) -= q.col(k).dot(q.col(j)) * q.col(k);
    q.col(j) /= q.col(j).norm();
  }
  return q;
}

inline std::vector<EntityId> iota_ids(std::size_t n, EntityId first = 1) {
  std::vector<EntityId> ids(n);
  std::iota(ids.begin(), ids.end(), first);
  return ids;
}

inline EmbeddingMatrix items_of(Matrix m) {
  const auto n = static_cast<std::size_t>(m.rows());
  return EmbeddingMatrix(Role::Item, iota_ids(n), std::move(m));
}

inline EmbeddingMatrix users_of(Matrix m) {
  const auto n = static_cast<std::size_t>(m.rows());
  return EmbeddingMatrix(Role::User, iota_ids(n), std::move(m));
}

inline double relative_error(const Matrix& got, const Matrix& want) {
  return (got - want).norm() / want.norm();
}

/// Oracle singular values of a materialised matrix.
inline std::vector<double> oracle_singular_values(const Matrix& x) {
  return oracle::singular_values(static_cast<std::size_t>(x.rows()),
                                 static_cast<std::size_t>(x.cols()),
                                 [&](std::size_t i, std::size_t j) {
                                   return x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                                 });
}

inline double off_diagonal_norm(const Matrix& m) {
  Matrix off = m;
  off.diagonal().setZero();
  return off.norm();
}

}  // namespace olre::test
