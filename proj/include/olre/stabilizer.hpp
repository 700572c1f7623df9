#pragma once

#include <optional>
#include <string>

#include "olre/lowrank.hpp"
#include "olre/procrustes.hpp"

namespace olre {

struct EmbeddingPair {
  EmbeddingMatrix items;
  EmbeddingMatrix users;
};

struct StabilizeOptions {
  LowRankOptions lowrank;
  // Minimum shared item ids with the reference; defaults to max(e, 10).
  std::optional<std::size_t> min_overlap;
};

std::size_t default_min_overlap(std::size_t dim) noexcept;

/// One run mapped into the standard space. The composed factors are
/// m_prime_items = transform.m_items * alignment.r (likewise for users) and
/// the stabilized tables are the raw tables times those factors.
struct StabilizedRun {
  std::string run_id;
  std::string reference_run_id;
  SvdTransform transform;
  AlignmentMap alignment;
  Matrix m_prime_items;
  Matrix m_prime_users;
  EmbeddingMatrix stabilized_items;
  EmbeddingMatrix stabilized_users;
  // Shared item ids used to fit the alignment (all items for the seed run).
  std::size_t overlap = 0;

  const Vector& spectrum() const noexcept { return transform.spectrum; }
};

/// Anchor for the next alignment: stabilized items of the newest run.
class ReferenceSpace {
 public:
  ReferenceSpace(std::string run_id, EmbeddingMatrix anchor_items);

  const std::string& run_id() const noexcept { return run_id_; }
  const EmbeddingMatrix& anchor_items() const noexcept { return anchor_; }
  std::size_t dimension() const noexcept { return anchor_.dim(); }

 private:
  std::string run_id_;
  EmbeddingMatrix anchor_;
};

struct StabilizationResult {
  StabilizedRun run;
  ReferenceSpace next_reference;
};

/// Seeds the standard space from one run; its alignment is the identity.
StabilizationResult init_reference(const EmbeddingMatrix& items, const EmbeddingMatrix& users,
                                   std::string run_id, const StabilizeOptions& options = {});

/// Maps a new run into the space defined by `ref`. The alignment is fitted on
/// items only, over the ids the run shares with the anchor.
StabilizationResult stabilize_run(const EmbeddingMatrix& items, const EmbeddingMatrix& users,
                                  const ReferenceSpace& ref, std::string run_id,
                                  const StabilizeOptions& options = {});

struct ChainReport {
  double items_gap = 0.0;  // ||T_hat(direct) - T_hat(chained)||_F
  double users_gap = 0.0;
  double gap = 0.0;        // sqrt(items_gap^2 + users_gap^2)
  double relative_gap = 0.0;
};

/// Stabilizes run2 against run0's reference directly and against the
/// reference chained through run1, and measures the difference.
ChainReport chain_equivalence_check(const EmbeddingPair& run0, const EmbeddingPair& run1,
                                    const EmbeddingPair& run2,
                                    const StabilizeOptions& options = {});

}  // namespace olre
