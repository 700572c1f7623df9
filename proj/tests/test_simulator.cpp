#include <doctest.h>

#include <set>

#include "olre/metrics.hpp"
#include "olre/simulator.hpp"
#include "support.hpp"

using namespace olre;
using namespace olre::test;

namespace {

SimConfig small_config(std::uint64_t seed = 7) {
  SimConfig cfg;
  cfg.n_items = 300;
  cfg.n_users = 250;
  cfg.e = 8;
  cfg.seed = seed;
  return cfg;
}

ErrorCode config_error(const nlohmann::json& j) {
  try {
    SimConfig::from_json(j).validate();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::IoError;
}

}  // namespace

TEST_CASE("ground truth is deterministic in the seed") {
  const SimConfig cfg = small_config();
  const EmbeddingPair a = gen_ground_truth(cfg);
  const EmbeddingPair b = gen_ground_truth(cfg);
  CHECK(a.items.vectors() == b.items.vectors());
  CHECK(a.users.vectors() == b.users.vectors());
  CHECK(a.items.ids() == iota_ids(300));
  CHECK(a.users.ids() == iota_ids(250));
  CHECK(a.items.role() == Role::Item);
  CHECK(a.users.role() == Role::User);

  SimConfig other = cfg;
  other.seed = 8;
  CHECK(gen_ground_truth(other).items.vectors() != a.items.vectors());

  SimConfig noisy = cfg;
  noisy.noise_scale = 0.5;
  noisy.rotation = Rotation::GeneralInvertible;
  CHECK(gen_ground_truth(noisy).items.vectors() == a.items.vectors());
}

TEST_CASE("ground-truth score matrix has rank e") {
  const EmbeddingPair gt = gen_ground_truth(small_config());
  const Matrix scores = gt.items.vectors() * gt.users.vectors().transpose();
  const std::vector<double> s = oracle_singular_values(scores);
  REQUIRE(s.size() >= 9);
  CHECK(s[7] > 1e-6 * s[0]);
  CHECK(s[8] < 1e-10 * s[0]);
}

TEST_CASE("ground-truth entries have variance 1/e") {
  SimConfig cfg = small_config();
  cfg.n_items = 4000;
  cfg.e = 16;
  const Matrix& v = gen_ground_truth(cfg).items.vectors();
  const double var = v.squaredNorm() / static_cast<double>(v.size());
  CHECK(var == doctest::Approx(1.0 / 16.0).epsilon(0.03));
}

TEST_CASE("retraining without noise") {
  const SimConfig cfg = small_config();
  const EmbeddingPair gt = gen_ground_truth(cfg);
  const Matrix truth = gt.items.vectors() * gt.users.vectors().transpose();

  SUBCASE("orthogonal rotation preserves every score") {
    const EmbeddingPair run = gen_retrained_run(gt, cfg);
    const Matrix got = run.items.vectors() * run.users.vectors().transpose();
    CHECK(relative_error(got, truth) < 1e-12);
    CHECK(relative_error(run.items.vectors(), gt.items.vectors()) > 0.1);
  }
  SUBCASE("general invertible mixing keeps the score spaces but not the scores") {
    SimConfig g = cfg;
    g.rotation = Rotation::GeneralInvertible;
    const EmbeddingPair run = gen_retrained_run(gt, g);
    const Matrix got = run.items.vectors() * run.users.vectors().transpose();
    CHECK(relative_error(got, truth) > 1e-3);
    const Eigen::HouseholderQR<Matrix> qr_t(gt.items.vectors());
    const Matrix q_t = qr_t.householderQ() * Matrix::Identity(300, 8);
    CHECK((got - q_t * (q_t.transpose() * got)).norm() < 1e-10 * got.norm());
    const Eigen::HouseholderQR<Matrix> qr_w(gt.users.vectors());
    const Matrix q_w = qr_w.householderQ() * Matrix::Identity(250, 8);
    const Matrix got_t = got.transpose();
    CHECK((got_t - q_w * (q_w.transpose() * got_t)).norm() < 1e-10 * got.norm());
  }
  SUBCASE("no rotation reproduces the base") {
    SimConfig n = cfg;
    n.rotation = Rotation::None;
    const EmbeddingPair run = gen_retrained_run(gt, n);
    CHECK(run.items.vectors() == gt.items.vectors());
    CHECK(run.users.vectors() == gt.users.vectors());
  }
  SUBCASE("run index selects independent draws") {
    const EmbeddingPair r1 = gen_retrained_run(gt, cfg, 1);
    const EmbeddingPair r2 = gen_retrained_run(gt, cfg, 2);
    CHECK(r1.items.vectors() == gen_retrained_run(gt, cfg, 1).items.vectors());
    CHECK(r1.items.vectors() != r2.items.vectors());
  }
}

TEST_CASE("noise is scaled relative to the base norm") {
  SimConfig cfg = small_config();
  cfg.rotation = Rotation::None;
  cfg.noise_scale = 0.05;
  const EmbeddingPair gt = gen_ground_truth(cfg);
  const EmbeddingPair run = gen_retrained_run(gt, cfg);
  CHECK(relative_error(run.items.vectors(), gt.items.vectors()) == doctest::Approx(0.05).epsilon(0.1));
  CHECK(relative_error(run.users.vectors(), gt.users.vectors()) == doctest::Approx(0.05).epsilon(0.1));
}

TEST_CASE("raw cosines between runs are near zero on average over seeds") {
  double items = 0.0;
  double users = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SimConfig cfg = small_config(seed);
    const EmbeddingPair gt = gen_ground_truth(cfg);
    const EmbeddingPair run = gen_retrained_run(gt, cfg);
    items += mean_same_id_cosine(gt.items, run.items).mean;
    users += mean_same_id_cosine(gt.users, run.users).mean;
  }
  CHECK(std::abs(items / 20.0) < 0.1);
  CHECK(std::abs(users / 20.0) < 0.1);
}

TEST_CASE("vocabulary drift replaces a fraction of item ids") {
  SimConfig cfg = small_config();
  cfg.vocab_drop_fraction = 0.2;
  const EmbeddingPair gt = gen_ground_truth(cfg);
  const EmbeddingPair run = gen_retrained_run(gt, cfg);
  CHECK(run.items.rows() == gt.items.rows());
  CHECK(run.users.ids() == gt.users.ids());
  const RowPairs shared = intersect_ids(gt.items, run.items);
  CHECK(shared.in_a.size() == 240);
  const std::set<EntityId> unique(run.items.ids().begin(), run.items.ids().end());
  CHECK(unique.size() == run.items.ids().size());
  const EmbeddingPair run2 = gen_retrained_run(gt, cfg, 2);
  CHECK(intersect_ids(run.items, run2.items).in_a.size() < 240);
}

TEST_CASE("rotation generators") {
  std::mt19937_64 rng(11);
  for (std::size_t e : {1u, 2u, 8u, 32u}) {
    const Matrix q = haar_orthogonal(e, rng);
    const Matrix id = Matrix::Identity(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(e));
    CHECK((q.transpose() * q - id).norm() < 1e-13);
    const Matrix g = clipped_invertible(e, 100.0, rng);
    const std::vector<double> s = oracle_singular_values(g);
    CHECK(s.front() / s.back() <= 100.0 * (1.0 + 1e-9));
    CHECK(std::abs(g.determinant()) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("config parsing and validation") {
  const SimConfig cfg = SimConfig::from_json(
      {{"n_items", 10}, {"n_users", 12}, {"e", 4}, {"noise_scale", 0.1}, {"rotation", "general_invertible"},
       {"vocab_drop_fraction", 0.25}, {"seed", 99}});
  CHECK(cfg.n_items == 10);
  CHECK(cfg.n_users == 12);
  CHECK(cfg.e == 4);
  CHECK(cfg.noise_scale == 0.1);
  CHECK(cfg.rotation == Rotation::GeneralInvertible);
  CHECK(cfg.vocab_drop_fraction == 0.25);
  CHECK(cfg.seed == 99);
  const SimConfig back = SimConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  CHECK(SimConfig::from_json(nlohmann::json::object()).n_items == 2000);
  CHECK(parse_rotation("general") == Rotation::GeneralInvertible);

  CHECK(config_error({{"e", 0}}) == ErrorCode::InvalidConfig);
  CHECK(config_error({{"n_items", 0}}) == ErrorCode::InvalidConfig);
  CHECK(config_error({{"noise_scale", -1.0}}) == ErrorCode::InvalidConfig);
  CHECK(config_error({{"vocab_drop_fraction", 1.0}}) == ErrorCode::InvalidConfig);
  CHECK(config_error({{"rotation", "shear"}}) == ErrorCode::InvalidConfig);
  CHECK(config_error({{"bogus", 1}}) == ErrorCode::InvalidConfig);
  CHECK(config_error({{"e", "four"}}) == ErrorCode::InvalidConfig);
}
