#include "olre/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "olre/simd/kernels.hpp"

namespace olre {

namespace {

// Neumaier summation; the mean must not depend on how rows are grouped.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

void require_unique(std::span<const EntityId> list, const char* which) {
  std::unordered_set<EntityId> seen;
  seen.reserve(list.size());
  for (EntityId id : list) {
    if (!seen.insert(id).second) {
      throw Error(ErrorCode::DuplicateId,
                  std::string(which) + " contains id " + std::to_string(id) + " twice");
    }
  }
}

}  // namespace

CosineSummary mean_same_id_cosine(const EmbeddingMatrix& a, const EmbeddingMatrix& b,
                                  ZeroNormPolicy policy) {
  if (a.role() != b.role()) {
    throw Error(ErrorCode::RoleMismatch, "cannot compare item rows with user rows");
  }
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "widths " + std::to_string(a.dim()) + " and " + std::to_string(b.dim()));
  }
  const RowPairs shared = intersect_ids(a, b);
  if (shared.size() == 0) {
    throw Error(ErrorCode::EmptyIntersection, "no shared ids");
  }
  const auto& k = simd::active_kernels();
  CompensatedSum total;
  CosineSummary out;
  for (std::size_t i = 0; i < shared.size(); ++i) {
    const double* x = a.row(shared.in_a[i]).data();
    const double* y = b.row(shared.in_b[i]).data();
    const double nx2 = k.dot(x, x, a.dim());
    const double ny2 = k.dot(y, y, b.dim());
    if (nx2 == 0.0 || ny2 == 0.0) {
      if (policy == ZeroNormPolicy::Strict) {
        throw Error(ErrorCode::ZeroNormRow,
                    "id " + std::to_string(a.ids()[shared.in_a[i]]) + " has a zero vector");
      }
      ++out.excluded;
      continue;
    }
    // sqrt(fl(d * d)) == d, so identical rows give exactly 1.
    const double c = k.dot(x, y, a.dim()) / std::sqrt(nx2 * ny2);
    total.add(std::clamp(c, -1.0, 1.0));
    ++out.n;
  }
  if (out.n == 0) {
    throw Error(ErrorCode::EmptyIntersection, "every shared id has a zero vector");
  }
  out.mean = total.value() / static_cast<double>(out.n);
  return out;
}

double rbo(std::span<const EntityId> list_a, std::span<const EntityId> list_b, double p,
           std::size_t depth) {
  if (!(p > 0.0 && p < 1.0)) {
    throw Error(ErrorCode::InvalidPersistence, "persistence must lie in (0, 1)");
  }
  if (depth < 1) throw Error(ErrorCode::InvalidArgument, "depth must be at least 1");
  require_unique(list_a, "first list");
  require_unique(list_b, "second list");

  const std::size_t k = std::min({depth, list_a.size(), list_b.size()});
  if (k == 0) return list_a.empty() && list_b.empty() ? 1.0 : 0.0;

  std::unordered_set<EntityId> seen_a;
  std::unordered_set<EntityId> seen_b;
  seen_a.reserve(k);
  seen_b.reserve(k);
  std::size_t overlap = 0;
  double weight = 1.0;  // p^{d-1}
  double sum = 0.0;
  double agreement = 0.0;
  for (std::size_t d = 1; d <= k; ++d) {
    const EntityId x = list_a[d - 1];
    const EntityId y = list_b[d - 1];
    if (x == y) {
      ++overlap;
    } else {
      if (seen_b.count(x)) ++overlap;
      if (seen_a.count(y)) ++overlap;
    }
    seen_a.insert(x);
    seen_b.insert(y);
    agreement = static_cast<double>(overlap) / static_cast<double>(d);
    sum += weight * agreement;
    weight *= p;
  }
  // weight is now p^k.
  return std::clamp((1.0 - p) * sum + weight * agreement, 0.0, 1.0);
}

std::vector<EntityId> top_k_items(const EmbeddingMatrix& items, std::span<const double> user,
                                  std::size_t k) {
  if (user.size() != items.dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "user width " + std::to_string(user.size()) + " != item width " +
                    std::to_string(items.dim()));
  }
  std::vector<double> scores(items.rows());
  simd::active_kernels().rows_dot(items.vectors().data(), items.rows(), items.dim(), user.data(),
                                  scores.data());
  std::vector<std::size_t> order(items.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto& ids = items.ids();
  const auto better = [&](std::size_t i, std::size_t j) {
    if (scores[i] != scores[j]) return scores[i] > scores[j];
    return ids[i] < ids[j];
  };
  k = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    better);
  std::vector<EntityId> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = ids[order[i]];
  return out;
}

RankCorrelation rank_correlation_report(const EmbeddingMatrix& items_ref,
                                        const EmbeddingMatrix& users_a,
                                        const EmbeddingMatrix& users_b, std::size_t top_k,
                                        double p) {
  if (users_a.dim() != items_ref.dim() || users_b.dim() != items_ref.dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "item width " + std::to_string(items_ref.dim()) + ", user widths " +
                    std::to_string(users_a.dim()) + " and " + std::to_string(users_b.dim()));
  }
  const RowPairs shared = intersect_ids(users_a, users_b);
  if (shared.size() == 0) throw Error(ErrorCode::EmptyIntersection, "no shared user ids");
  CompensatedSum total;
  for (std::size_t i = 0; i < shared.size(); ++i) {
    const auto list_a = top_k_items(items_ref, users_a.row(shared.in_a[i]), top_k);
    const auto list_b = top_k_items(items_ref, users_b.row(shared.in_b[i]), top_k);
    total.add(rbo(list_a, list_b, p, top_k));
  }
  return {total.value() / static_cast<double>(shared.size()), shared.size()};
}

MetricsReport compare_runs(const EmbeddingMatrix& items_a, const EmbeddingMatrix& users_a,
                           const EmbeddingMatrix& items_b, const EmbeddingMatrix& users_b,
                           const MetricsOptions& options) {
  MetricsReport report;
  const auto users = mean_same_id_cosine(users_a, users_b, options.zero_norm);
  const auto items = mean_same_id_cosine(items_a, items_b, options.zero_norm);
  const auto ranks = rank_correlation_report(items_a, users_a, users_b, options.top_k,
                                             options.rbo_persistence);
  report.mean_user_cosine = users.mean;
  report.n_users_compared = users.n;
  report.mean_item_cosine = items.mean;
  report.n_items_compared = items.n;
  report.excluded_zero_norm = users.excluded + items.excluded;
  report.mean_rbo = ranks.mean_rbo;
  report.n_rbo_users = ranks.n;
  report.rbo_persistence = options.rbo_persistence;
  report.rbo_depth = options.top_k;
  return report;
}

std::string to_key_value_text(const MetricsReport& r) {
  std::ostringstream out;
  out.precision(10);
  out << "run_a = " << r.run_a << '\n'
      << "run_b = " << r.run_b << '\n'
      << "embeddings = " << (r.stabilized ? "stabilized" : "raw") << '\n'
      << "user_similarity = " << r.mean_user_cosine << '\n'
      << "item_similarity = " << r.mean_item_cosine << '\n'
      << "rank_correlation = " << r.mean_rbo << '\n'
      << "n_users_compared = " << r.n_users_compared << '\n'
      << "n_items_compared = " << r.n_items_compared << '\n'
      << "n_rbo_users = " << r.n_rbo_users << '\n'
      << "excluded_zero_norm = " << r.excluded_zero_norm << '\n'
      << "rbo_persistence = " << r.rbo_persistence << '\n'
      << "rbo_depth = " << r.rbo_depth << '\n';
  return out.str();
}

nlohmann::json to_json(const MetricsReport& r) {
  return {
      {"run_a", r.run_a},
      {"run_b", r.run_b},
      {"embeddings", r.stabilized ? "stabilized" : "raw"},
      {"rows",
       nlohmann::json::array({
           {{"metric", "user_similarity"}, {"value", r.mean_user_cosine}, {"n", r.n_users_compared}},
           {{"metric", "item_similarity"}, {"value", r.mean_item_cosine}, {"n", r.n_items_compared}},
           {{"metric", "rank_correlation"}, {"value", r.mean_rbo}, {"n", r.n_rbo_users}},
       })},
      {"excluded_zero_norm", r.excluded_zero_norm},
      {"rbo_persistence", r.rbo_persistence},
      {"rbo_depth", r.rbo_depth},
  };
}

}  // namespace olre
