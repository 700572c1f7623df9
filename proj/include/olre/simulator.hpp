#pragma once

#include <cstdint>
#include <random>

#include <json.hpp>

#include "olre/stabilizer.hpp"

namespace olre {

enum class Rotation { None, Orthogonal, GeneralInvertible };

std::string_view to_string(Rotation rotation) noexcept;
Rotation parse_rotation(std::string_view text);

/// Synthetic retraining scenario.
struct SimConfig {
  std::size_t n_items = 2000;
  std::size_t n_users = 2000;
  std::size_t e = 32;
  double noise_scale = 0.0;  // noise Frobenius norm relative to the base table
  Rotation rotation = Rotation::Orthogonal;
  double vocab_drop_fraction = 0.0;
  std::uint64_t seed = 0;

  /// Throws InvalidConfig.
  void validate() const;

  /// Reads the flat JSON object {"n_items": .., "rotation": "orthogonal", ..};
  /// absent keys keep their defaults, unknown keys are rejected.
  static SimConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Independent generator for (seed, stream). Stream 0 is the ground truth.
std::mt19937_64 substream(std::uint64_t seed, std::uint64_t stream);

/// Haar-distributed orthogonal matrix (QR of a Gaussian, signs fixed by R).
Matrix haar_orthogonal(std::size_t e, std::mt19937_64& rng);

/// Gaussian matrix with singular values clipped so cond <= max_condition.
Matrix clipped_invertible(std::size_t e, double max_condition, std::mt19937_64& rng);

/// Item ids 1..n_items and user ids 1..n_users with i.i.d. N(0, 1/e) entries.
EmbeddingPair gen_ground_truth(const SimConfig& cfg);

/// A retraining of `base`: common right factor per cfg.rotation, additive
/// Gaussian noise, and item vocabulary drift. run_index selects the substream.
EmbeddingPair gen_retrained_run(const EmbeddingPair& base, const SimConfig& cfg,
                                std::uint64_t run_index = 1);

}  // namespace olre
