#include "olre/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace olre {

namespace {

constexpr double kMaxCondition = 100.0;
constexpr std::uint64_t kFreshIdBase = std::uint64_t{1} << 40;

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double sd, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, sd);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

std::vector<EntityId> sequential_ids(std::size_t n) {
  std::vector<EntityId> ids(n);
  std::iota(ids.begin(), ids.end(), EntityId{1});
  return ids;
}

Matrix add_relative_noise(const Matrix& base, const Matrix& mixed, double scale,
                          std::mt19937_64& rng) {
  if (scale == 0.0 || base.size() == 0) return mixed;
  Matrix noise = gaussian(mixed.rows(), mixed.cols(), 1.0, rng);
  const double norm = noise.norm();
  if (norm > 0.0) noise *= scale * base.norm() / norm;
  return mixed + noise;
}

}  // namespace

std::string_view to_string(Rotation rotation) noexcept {
  switch (rotation) {
    case Rotation::None: return "none";
    case Rotation::Orthogonal: return "orthogonal";
    case Rotation::GeneralInvertible: return "general_invertible";
  }
  return "unknown";
}

Rotation parse_rotation(std::string_view text) {
  if (text == "none") return Rotation::None;
  if (text == "orthogonal") return Rotation::Orthogonal;
  if (text == "general_invertible" || text == "general") return Rotation::GeneralInvertible;
  throw Error(ErrorCode::InvalidConfig, "unknown rotation '" + std::string(text) + "'");
}

void SimConfig::validate() const {
  if (e == 0) throw Error(ErrorCode::InvalidConfig, "e must be positive");
  if (e > std::min(n_items, n_users)) {
    throw Error(ErrorCode::InvalidConfig,
                "e = " + std::to_string(e) + " exceeds min(n_items, n_users)");
  }
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) {
    throw Error(ErrorCode::InvalidConfig, "noise_scale must be a finite nonnegative number");
  }
  if (!(vocab_drop_fraction >= 0.0 && vocab_drop_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "vocab_drop_fraction must lie in [0, 1)");
  }
}

SimConfig SimConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
  SimConfig cfg;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "n_items") cfg.n_items = value.get<std::size_t>();
      else if (key == "n_users") cfg.n_users = value.get<std::size_t>();
      else if (key == "e") cfg.e = value.get<std::size_t>();
      else if (key == "noise_scale") cfg.noise_scale = value.get<double>();
      else if (key == "rotation") cfg.rotation = parse_rotation(value.get<std::string>());
      else if (key == "vocab_drop_fraction") cfg.vocab_drop_fraction = value.get<double>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else throw Error(ErrorCode::InvalidConfig, "unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::InvalidConfig, ex.what());
  }
  cfg.validate();
  return cfg;
}

nlohmann::json SimConfig::to_json() const {
  return {{"n_items", n_items},
          {"n_users", n_users},
          {"e", e},
          {"noise_scale", noise_scale},
          {"rotation", std::string(olre::to_string(rotation))},
          {"vocab_drop_fraction", vocab_drop_fraction},
          {"seed", seed}};
}

std::mt19937_64 substream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

Matrix haar_orthogonal(std::size_t e, std::mt19937_64& rng) {
  const auto n = static_cast<Eigen::Index>(e);
  const Eigen::MatrixXd g = gaussian(n, n, 1.0, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const auto& packed = qr.matrixQR();
  for (Eigen::Index j = 0; j < n; ++j) {
    if (packed(j, j) < 0.0) q.col(j) *= -1.0;
  }
  return q;
}

Matrix clipped_invertible(std::size_t e, double max_condition, std::mt19937_64& rng) {
  const auto n = static_cast<Eigen::Index>(e);
  const Eigen::MatrixXd g = gaussian(n, n, 1.0, rng);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(g, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vector s = svd.singularValues();
  const double floor = s(0) / max_condition;
  for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = std::max(s(i), floor);
  // Rescale so the mixing has unit geometric-mean gain.
  const double gain = std::exp(s.array().log().mean());
  return svd.matrixU() * (s / gain).asDiagonal() * svd.matrixV().transpose();
}

EmbeddingPair gen_ground_truth(const SimConfig& cfg) {
  cfg.validate();
  const double sd = 1.0 / std::sqrt(static_cast<double>(cfg.e));
  auto item_rng = substream(cfg.seed, 0);
  auto user_rng = substream(cfg.seed, 1);
  const auto e = static_cast<Eigen::Index>(cfg.e);
  return {
      EmbeddingMatrix(Role::Item, sequential_ids(cfg.n_items),
                      gaussian(static_cast<Eigen::Index>(cfg.n_items), e, sd, item_rng)),
      EmbeddingMatrix(Role::User, sequential_ids(cfg.n_users),
                      gaussian(static_cast<Eigen::Index>(cfg.n_users), e, sd, user_rng)),
  };
}

EmbeddingPair gen_retrained_run(const EmbeddingPair& base, const SimConfig& cfg,
                                std::uint64_t run_index) {
  if (!(cfg.noise_scale >= 0.0) || !std::isfinite(cfg.noise_scale)) {
    throw Error(ErrorCode::InvalidConfig, "noise_scale must be a finite nonnegative number");
  }
  if (!(cfg.vocab_drop_fraction >= 0.0 && cfg.vocab_drop_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "vocab_drop_fraction must lie in [0, 1)");
  }
  if (base.items.dim() != base.users.dim() || base.items.dim() == 0) {
    throw Error(ErrorCode::InvalidConfig, "base pair must share a positive width");
  }
  const std::size_t e = base.items.dim();
  // Streams 0 and 1 belong to the ground truth.
  auto rng = substream(cfg.seed, 2 + run_index);

  Matrix mix;
  switch (cfg.rotation) {
    case Rotation::None: mix = Matrix::Identity(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(e)); break;
    case Rotation::Orthogonal: mix = haar_orthogonal(e, rng); break;
    case Rotation::GeneralInvertible: mix = clipped_invertible(e, kMaxCondition, rng); break;
  }

  const Matrix& t = base.items.vectors();
  const Matrix& w = base.users.vectors();
  Matrix items = add_relative_noise(t, t * mix, cfg.noise_scale, rng);
  Matrix users = add_relative_noise(w, w * mix, cfg.noise_scale, rng);
  std::vector<EntityId> item_ids = base.items.ids();

  const auto n_drop = static_cast<std::size_t>(
      std::floor(cfg.vocab_drop_fraction * static_cast<double>(item_ids.size())));
  if (n_drop > 0) {
    std::vector<std::size_t> rows(item_ids.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    std::shuffle(rows.begin(), rows.end(), rng);
    const std::vector<std::size_t> dropped(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_drop));
    const double sd = 1.0 / std::sqrt(static_cast<double>(e));
    std::normal_distribution<double> normal(0.0, sd);
    for (std::size_t i = 0; i < dropped.size(); ++i) {
      item_ids[dropped[i]] = kFreshIdBase * (run_index + 1) + i;
      for (Eigen::Index c = 0; c < items.cols(); ++c) {
        items(static_cast<Eigen::Index>(dropped[i]), c) = normal(rng);
      }
    }
  }
  return {EmbeddingMatrix(Role::Item, std::move(item_ids), std::move(items)),
          EmbeddingMatrix(Role::User, base.users.ids(), std::move(users))};
}

}  // namespace olre
