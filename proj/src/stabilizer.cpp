#include "olre/stabilizer.hpp"

#include <algorithm>
#include <cmath>

namespace olre {

namespace {

StabilizedRun compose(const EmbeddingMatrix& items, const EmbeddingMatrix& users,
                      SvdTransform transform, AlignmentMap alignment) {
  StabilizedRun run;
  run.m_prime_items = transform.m_items * alignment.r;
  run.m_prime_users = transform.m_users * alignment.r;
  run.stabilized_items = apply_transform(items, run.m_prime_items);
  run.stabilized_users = apply_transform(users, run.m_prime_users);
  run.transform = std::move(transform);
  run.alignment = std::move(alignment);
  return run;
}

}  // namespace

std::size_t default_min_overlap(std::size_t dim) noexcept { return std::max<std::size_t>(dim, 10); }

ReferenceSpace::ReferenceSpace(std::string run_id, EmbeddingMatrix anchor_items)
    : run_id_(std::move(run_id)), anchor_(std::move(anchor_items)) {
  if (anchor_.empty() || anchor_.dim() == 0) {
    throw Error(ErrorCode::InvalidArgument, "reference anchor must be non-empty");
  }
  if (anchor_.role() != Role::Item) {
    throw Error(ErrorCode::RoleMismatch, "reference anchor must hold item embeddings");
  }
}

StabilizationResult init_reference(const EmbeddingMatrix& items, const EmbeddingMatrix& users,
                                   std::string run_id, const StabilizeOptions& options) {
  SvdTransform transform = low_rank_svd_trans(items, users, options.lowrank, run_id);
  AlignmentMap identity;
  identity.r = Matrix::Identity(static_cast<Eigen::Index>(transform.output_dim()),
                                static_cast<Eigen::Index>(transform.output_dim()));
  identity.source_run = run_id;
  identity.target_run = run_id;

  StabilizedRun run = compose(items, users, std::move(transform), std::move(identity));
  run.run_id = run_id;
  run.reference_run_id = run_id;
  run.overlap = items.rows();
  ReferenceSpace next(run_id, run.stabilized_items);
  return {std::move(run), std::move(next)};
}

StabilizationResult stabilize_run(const EmbeddingMatrix& items, const EmbeddingMatrix& users,
                                  const ReferenceSpace& ref, std::string run_id,
                                  const StabilizeOptions& options) {
  if (items.dim() != users.dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "item width " + std::to_string(items.dim()) + " != user width " +
                    std::to_string(users.dim()));
  }
  const std::size_t required = options.min_overlap.value_or(default_min_overlap(ref.dimension()));
  const RowPairs shared = intersect_ids(items, ref.anchor_items());
  if (shared.size() < required) {
    throw Error(ErrorCode::InsufficientOverlap,
                std::to_string(shared.size()) + " item ids shared with reference '" +
                    ref.run_id() + "', need " + std::to_string(required));
  }

  SvdTransform transform = low_rank_svd_trans(items, users, options.lowrank, run_id);
  if (transform.output_dim() != ref.dimension()) {
    throw Error(ErrorCode::DimensionMismatch,
                "run dimension " + std::to_string(transform.output_dim()) +
                    " != reference dimension " + std::to_string(ref.dimension()));
  }

  const Matrix svd_items = apply_transform(items.vectors(), transform.m_items);
  AlignmentMap alignment = ortho_procrustes(gather_rows(svd_items, shared.in_a),
                                            gather_rows(ref.anchor_items().vectors(), shared.in_b));
  alignment.source_run = run_id;
  alignment.target_run = ref.run_id();

  StabilizedRun run = compose(items, users, std::move(transform), std::move(alignment));
  run.run_id = run_id;
  run.reference_run_id = ref.run_id();
  run.overlap = shared.size();
  ReferenceSpace next(run_id, run.stabilized_items);
  return {std::move(run), std::move(next)};
}

ChainReport chain_equivalence_check(const EmbeddingPair& run0, const EmbeddingPair& run1,
                                    const EmbeddingPair& run2, const StabilizeOptions& options) {
  const auto seed = init_reference(run0.items, run0.users, "run0", options);
  const auto first = stabilize_run(run1.items, run1.users, seed.next_reference, "run1", options);
  const auto direct = stabilize_run(run2.items, run2.users, seed.next_reference, "run2", options);
  const auto chained =
      stabilize_run(run2.items, run2.users, first.next_reference, "run2", options);

  ChainReport report;
  report.items_gap = (direct.run.stabilized_items.vectors() -
                      chained.run.stabilized_items.vectors()).norm();
  report.users_gap = (direct.run.stabilized_users.vectors() -
                      chained.run.stabilized_users.vectors()).norm();
  report.gap = std::hypot(report.items_gap, report.users_gap);
  const double scale = std::hypot(direct.run.stabilized_items.vectors().norm(),
                                  direct.run.stabilized_users.vectors().norm());
  report.relative_gap = scale > 0.0 ? report.gap / scale : report.gap;
  return report;
}

}  // namespace olre
