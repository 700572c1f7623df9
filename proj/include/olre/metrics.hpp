#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "olre/embedding.hpp"

namespace olre {

enum class ZeroNormPolicy { Strict, Lenient };

struct CosineSummary {
  double mean = 0.0;
  std::size_t n = 0;
  // Zero-norm pairs skipped under ZeroNormPolicy::Lenient.
  std::size_t excluded = 0;
};

/// Mean cosine similarity between rows that share an id in `a` and `b`.
CosineSummary mean_same_id_cosine(const EmbeddingMatrix& a, const EmbeddingMatrix& b,
                                  ZeroNormPolicy policy = ZeroNormPolicy::Strict);

/// Extrapolated rank-biased overlap of two ranked id lists evaluated to
/// `depth` (or the shorter list length, if smaller):
///   (1 - p) * sum_{d=1..k} p^{d-1} A_d + p^k A_k,  A_d = |head_d(a) n head_d(b)| / d
double rbo(std::span<const EntityId> list_a, std::span<const EntityId> list_b, double p,
           std::size_t depth);

/// Ids of the k highest-scoring items for `user` (dot product), ties broken
/// by ascending id.
std::vector<EntityId> top_k_items(const EmbeddingMatrix& items, std::span<const double> user,
                                  std::size_t k);

struct RankCorrelation {
  double mean_rbo = 0.0;
  std::size_t n = 0;
};

/// For every user present in both tables, compares the top-k item lists that
/// `items_ref` produces when scored with the user's vector from a and from b.
RankCorrelation rank_correlation_report(const EmbeddingMatrix& items_ref,
                                        const EmbeddingMatrix& users_a,
                                        const EmbeddingMatrix& users_b, std::size_t top_k = 100,
                                        double p = 0.9);

struct MetricsOptions {
  std::size_t top_k = 100;
  double rbo_persistence = 0.9;
  ZeroNormPolicy zero_norm = ZeroNormPolicy::Strict;
};

struct MetricsReport {
  std::string run_a;
  std::string run_b;
  bool stabilized = true;
  double mean_user_cosine = 0.0;
  double mean_item_cosine = 0.0;
  double mean_rbo = 0.0;
  std::size_t n_users_compared = 0;
  std::size_t n_items_compared = 0;
  std::size_t n_rbo_users = 0;
  std::size_t excluded_zero_norm = 0;
  double rbo_persistence = 0.9;
  std::size_t rbo_depth = 100;
};

/// Run-vs-run comparison. Rank correlation scores items of run a against
/// users of run a and of run b.
MetricsReport compare_runs(const EmbeddingMatrix& items_a, const EmbeddingMatrix& users_a,
                           const EmbeddingMatrix& items_b, const EmbeddingMatrix& users_b,
                           const MetricsOptions& options = {});

/// One `metric = value` line per field.
std::string to_key_value_text(const MetricsReport& report);
nlohmann::json to_json(const MetricsReport& report);

}  // namespace olre
