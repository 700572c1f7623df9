// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unistd.h>

#include <unsupported/Eigen/MatrixFunctions>

#include "olre/metrics.hpp"
#include "olre/procrustes.hpp"
#include "olre/simulator.hpp"
#include "olre/stabilizer.hpp"
#include "olre/store.hpp"
#include "oracle/rbo.hpp"
#include "support.hpp"

using namespace olre;
using namespace olre::test;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int number, const std::string& name, const Outcome& o) {
  std::printf("criterion %d %-28s %s  %s\n", number, name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

template <typename... Args>
std::string format(const char* fmt, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

// Every alignment produced anywhere in this binary, for the orthogonality gate.
struct AlignmentLog {
  std::size_t count = 0;
  double worst_ratio = 0.0;  // max ||r^T r - I|| / (1e-12 e)
  void add(const AlignmentMap& map) {
    ++count;
    const double e = static_cast<double>(map.r.rows());
    worst_ratio = std::max(worst_ratio, orthogonality_error(map.r) / (1e-12 * e));
  }
} alignments;

EmbeddingMatrix with_role(Role role, Matrix m) {
  const auto n = static_cast<std::size_t>(m.rows());
  return EmbeddingMatrix(role, iota_ids(n), std::move(m));
}

Outcome losslessness() {
  std::mt19937_64 rng(101);
  const int dims[] = {2, 8, 32, 64};
  const auto start = Clock::now();
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int e = dims[trial % 4];
    std::uniform_int_distribution<int> size(std::max(e, 10), 500);
    const int n = size(rng);
    const int m = size(rng);
    const EmbeddingPair ref{with_role(Role::Item, gaussian(n, e, rng)), with_role(Role::User, gaussian(m, e, rng))};
    const EmbeddingPair run{with_role(Role::Item, gaussian(n, e, rng)), with_role(Role::User, gaussian(m, e, rng))};
    const StabilizationResult r0 = init_reference(ref.items, ref.users, "ref");
    alignments.add(r0.run.alignment);
    const StabilizationResult r1 = stabilize_run(run.items, run.users, r0.next_reference, "run");
    alignments.add(r1.run.alignment);
    const Matrix want = run.items.vectors() * run.users.vectors().transpose();
    const Matrix got = r1.run.stabilized_items.vectors() * r1.run.stabilized_users.vectors().transpose();
    worst = std::max(worst, relative_error(got, want));
    const Matrix want0 = ref.items.vectors() * ref.users.vectors().transpose();
    const Matrix got0 = r0.run.stabilized_items.vectors() * r0.run.stabilized_users.vectors().transpose();
    worst = std::max(worst, relative_error(got0, want0));
  }
  const double t = seconds_since(start);
  return {worst <= 1e-10 && t < 30.0, format("max relative error %.3e (<= 1e-10), %.2f s (< 30 s)", worst, t)};
}

Outcome oracle_equivalence() {
  std::mt19937_64 rng(202);
  const int dims[] = {2, 8, 16, 32};
  double worst = 0.0;
  double fit_time = 0.0;
  const auto start = Clock::now();
  for (int trial = 0; trial < 50; ++trial) {
    const int e = dims[trial % 4];
    std::uniform_int_distribution<int> size(e, 200);
    const Matrix t = gaussian(size(rng), e, rng);
    const Matrix w = gaussian(size(rng), e, rng);
    const auto fit_start = Clock::now();
    const SvdTransform transform = low_rank_svd_trans(t, w);
    fit_time += seconds_since(fit_start);
    const std::vector<double> want = oracle_singular_values(t * w.transpose());
    for (int i = 0; i < e; ++i) {
      worst = std::max(worst, std::abs(transform.spectrum[i] - want[static_cast<std::size_t>(i)]) /
                                  want[static_cast<std::size_t>(i)]);
    }
  }
  const double total = seconds_since(start);
  return {worst <= 1e-8 && total < 10.0,
          format("max relative spectrum error %.3e (<= 1e-8), %.2f s incl. oracle, fit %.3f s (< 10 s)", worst,
                 total, fit_time)};
}

Outcome procrustes() {
  std::mt19937_64 rng(303);
  double worst_recovery = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int e = 1 + trial % 16;
    const Matrix a = gaussian(std::max(3 * e, 10), e, rng);
    const Matrix g = random_orthogonal(e, rng);
    const AlignmentMap map = ortho_procrustes(a, a * g);
    alignments.add(map);
    worst_recovery = std::max(worst_recovery, (map.r - g).norm());
  }

  // At the optimum every orthogonal direction r*exp(tK) has zero slope and
  // nonnegative curvature; checked both analytically and by central differences.
  double worst_slope = 0.0;
  double worst_difference = 0.0;
  double worst_drop = 0.0;
  int perturbations = 0;
  for (int e = 1; e <= 4; ++e) {
    const Matrix a = gaussian(20, e, rng);
    const Matrix b = a * random_orthogonal(e, rng) + 0.5 * gaussian(20, e, rng);
    const AlignmentMap map = ortho_procrustes(a, b);
    alignments.add(map);
    const Matrix& r = map.r;
    auto f = [&](const Matrix& omega) { return 0.5 * (a * omega - b).squaredNorm(); };
    const double f0 = f(r);
    const double scale = a.norm() * b.norm();
    const Matrix grad = r.transpose() * a.transpose() * (a * r - b);
    for (int k = 0; k < 250; ++k, ++perturbations) {
      Matrix kdir = gaussian(e, e, rng);
      kdir = kdir - Matrix(kdir.transpose());
      if (kdir.norm() == 0.0) continue;
      kdir /= kdir.norm();
      worst_slope = std::max(worst_slope, std::abs((grad.array() * kdir.array()).sum()) / scale);
      const double t = 1e-4;
      const Eigen::MatrixXd kd = kdir;
      const Matrix plus = r * Matrix((t * kd).exp());
      const Matrix minus = r * Matrix((-t * kd).exp());
      const double fd = (f(plus) - f(minus)) / (2.0 * t);
      worst_difference = std::max(worst_difference, std::abs(fd) / scale);
      worst_drop = std::max(worst_drop, (f0 - std::min(f(plus), f(minus))) / scale);
    }
  }
  // Central differences at t = 1e-4 carry O(t^2) truncation error.
  const bool pass = worst_recovery < 1e-10 && worst_slope < 1e-10 && worst_difference < 1e-6 &&
                    worst_drop <= 1e-14 && perturbations == 1000;
  return {pass, format("max ||r - G|| %.3e (< 1e-10); %d perturbations: slope %.1e, central difference %.1e, "
                       "max drop %.1e",
                       worst_recovery, perturbations, worst_slope, worst_difference, worst_drop)};
}

Outcome table_pattern() {
  const auto start = Clock::now();
  double raw_user = 0, raw_item = 0, stab_user = 0, stab_item = 0, raw_rbo = 0, stab_rbo = 0;
  const int seeds = 5;
  for (int seed = 0; seed < seeds; ++seed) {
    SimConfig cfg;
    cfg.n_items = 2000;
    cfg.n_users = 2000;
    cfg.e = 32;
    cfg.rotation = Rotation::Orthogonal;
    cfg.noise_scale = 0.05;
    cfg.seed = static_cast<std::uint64_t>(seed);
    const EmbeddingPair run0 = gen_ground_truth(cfg);
    const EmbeddingPair run1 = gen_retrained_run(run0, cfg, 1);
    const StabilizationResult s0 = init_reference(run0.items, run0.users, "run0");
    const StabilizationResult s1 = stabilize_run(run1.items, run1.users, s0.next_reference, "run1");
    alignments.add(s0.run.alignment);
    alignments.add(s1.run.alignment);
    const MetricsReport raw = compare_runs(run0.items, run0.users, run1.items, run1.users);
    const MetricsReport stab = compare_runs(s0.run.stabilized_items, s0.run.stabilized_users,
                                            s1.run.stabilized_items, s1.run.stabilized_users);
    raw_user += raw.mean_user_cosine / seeds;
    raw_item += raw.mean_item_cosine / seeds;
    raw_rbo += raw.mean_rbo / seeds;
    stab_user += stab.mean_user_cosine / seeds;
    stab_item += stab.mean_item_cosine / seeds;
    stab_rbo += stab.mean_rbo / seeds;
  }
  const double t = seconds_since(start);
  const bool pass = std::abs(raw_user) <= 0.1 && std::abs(raw_item) <= 0.1 && stab_user > 0.9 && stab_item > 0.9 &&
                    raw_rbo < 0.2 && stab_rbo > 0.8 && t < 120.0;
  return {pass, format("raw cos user %.4f item %.4f, stabilized cos user %.4f item %.4f, "
                       "RBO raw %.4f stabilized %.4f, %.1f s",
                       raw_user, raw_item, stab_user, stab_item, raw_rbo, stab_rbo, t)};
}

Outcome chaining() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SimConfig cfg;
    cfg.n_items = 1000;
    cfg.n_users = 800;
    cfg.e = 32;
    cfg.noise_scale = 0.0;
    cfg.rotation = Rotation::Orthogonal;
    cfg.seed = seed;
    const EmbeddingPair run0 = gen_ground_truth(cfg);
    const EmbeddingPair run1 = gen_retrained_run(run0, cfg, 1);
    const EmbeddingPair run2 = gen_retrained_run(run0, cfg, 2);
    worst = std::max(worst, chain_equivalence_check(run0, run1, run2).gap);

    const StabilizationResult s0 = init_reference(run0.items, run0.users, "run0");
    const StabilizationResult s1 = stabilize_run(run1.items, run1.users, s0.next_reference, "run1");
    const StabilizationResult s2 = stabilize_run(run2.items, run2.users, s1.next_reference, "run2");
    alignments.add(s1.run.alignment);
    alignments.add(s2.run.alignment);
  }
  return {worst < 1e-8, format("max Frobenius gap %.3e over 5 seeds (< 1e-8)", worst)};
}

double time_fit(const Matrix& t, const Matrix& w) {
  const auto start = Clock::now();
  const SvdTransform transform = low_rank_svd_trans(t, w);
  const double s = seconds_since(start);
  if (transform.output_dim() != static_cast<std::size_t>(t.cols())) return -1.0;
  return s;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

Outcome scaling() {
  constexpr Eigen::Index e = 128;
  constexpr Eigen::Index m_fixed = 10000;
  std::mt19937_64 rng(707);
  const Matrix w = gaussian(m_fixed, e, rng);
  const Matrix t_big = gaussian(200000, e, rng);
  const Matrix t_small = t_big.topRows(100000);

  time_fit(t_small, w);  // warm-up
  std::vector<double> small, big;
  for (int rep = 0; rep < 5; ++rep) {
    small.push_back(time_fit(t_small, w));
    big.push_back(time_fit(t_big, w));
  }
  const double ratio = median(big) / median(small);

  const Matrix w_full = gaussian(200000, e, rng);
  const double full = time_fit(t_big, w_full);
  const bool pass = ratio >= 1.4 && ratio <= 2.6 && full > 0.0 && full < 60.0;
  return {pass, format("n 100k -> 200k (m = %ld): %.3f s -> %.3f s, ratio %.2f (in [1.4, 2.6]); "
                       "n = m = 200k fit %.2f s (< 60 s)",
                       static_cast<long>(m_fixed), median(small), median(big), ratio, full)};
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool bit_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::equal(a.data(), a.data() + a.size(), b.data(), [](double x, double y) {
           return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
         });
}

Outcome persistence() {
  const fs::path root = fs::temp_directory_path() / ("olre_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  std::mt19937_64 rng(808);
  std::uniform_int_distribution<int> n_dist(0, 300), e_dist(1, 64);
  int identical = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int e = e_dist(rng);
    const fs::path a = root / ("a" + std::to_string(trial));
    const fs::path b = root / ("b" + std::to_string(trial));
    bool ok = false;
    if (trial % 3 == 2) {
      const int out = 1 + static_cast<int>(rng() % static_cast<unsigned>(e));
      const Matrix m = gaussian(e, out, rng);
      write_transform(m, TransformMeta{"m_prime_items", "x", "y", {}, out < e ? "truncate" : "strict",
                                       static_cast<std::size_t>(out)},
                      a);
      const TransformFile f = read_transform(a);
      write_transform(f.effective(), *f.meta, b);
      ok = bit_equal(f.effective(), m) && slurp(a) == slurp(b);
    } else {
      const Precision precision = trial % 3 == 0 ? Precision::F64 : Precision::F32;
      const int n = n_dist(rng);
      EmbeddingMatrix emb(trial % 2 ? Role::User : Role::Item, iota_ids(static_cast<std::size_t>(n), 7),
                          gaussian(n, e, rng));
      if (precision == Precision::F32) emb = round_to_f32(emb);
      write_embeddings(emb, a, precision);
      const EmbeddingFile f = read_embeddings(a);
      write_embeddings(f.matrix, b, f.precision);
      ok = bit_equal(f.matrix.vectors(), emb.vectors()) && f.matrix.ids() == emb.ids() && slurp(a) == slurp(b);
    }
    identical += ok;
  }

  // Crash simulation: faults before either rename leave the pointer on a
  // complete, verifiable run.
  bool crash_ok = true;
  {
    SimConfig cfg;
    cfg.n_items = 200;
    cfg.n_users = 150;
    cfg.e = 8;
    cfg.noise_scale = 0.01;
    const EmbeddingPair run0 = gen_ground_truth(cfg);
    const EmbeddingPair run1 = gen_retrained_run(run0, cfg, 1);
    const fs::path store_root = root / "store";
    RunStore store(store_root);
    WriterLock lock(store_root);
    const StabilizationResult s0 = init_reference(run0.items, run0.users, "run0");
    store.advance_reference(store.commit_run(s0.run, run0.items, run0.users, {}, lock), lock);
    const StabilizationResult s1 = stabilize_run(run1.items, run1.users, store.load_reference("run0"), "run1");
    alignments.add(s1.run.alignment);

    for (const std::string stage : {"before_commit_rename", "before_pointer_rename"}) {
      store.set_fault_hook([&](std::string_view at) {
        if (at == stage) throw std::runtime_error("simulated crash");
      });
      bool crashed = false;
      try {
        const RunRecord rec = store.has_run("run1") ? store.load_record("run1")
                                                    : store.commit_run(s1.run, run1.items, run1.users, {}, lock);
        store.advance_reference(rec, lock);
      } catch (const std::runtime_error&) {
        crashed = true;
      }
      store.set_fault_hook({});
      crash_ok = crash_ok && crashed && store.latest_reference() == "run0";
      store.verify(store.load_record(*store.latest_reference()));
    }
    store.advance_reference(store.load_record("run1"), lock);
    crash_ok = crash_ok && store.latest_reference() == "run1" &&
               store.reference_history() == std::vector<std::string>{"run0", "run1"};
  }
  fs::remove_all(root);
  return {identical == 200 && crash_ok,
          format("%d/200 artifacts bit-identical after read and rewrite; crash simulation %s", identical,
                 crash_ok ? "consistent" : "INCONSISTENT")};
}

Outcome orthogonality() {
  return {alignments.count > 0 && alignments.worst_ratio <= 1.0,
          format("%zu alignment maps, worst ||r^T r - I|| at %.3f of the 1e-12 e bound", alignments.count,
                 alignments.worst_ratio)};
}

Outcome rbo_definition() {
  std::mt19937_64 rng(909);
  std::uniform_int_distribution<std::size_t> len(0, 50), depth(1, 60);
  std::uniform_real_distribution<double> persistence(0.01, 0.99);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    auto draw = [&] {
      std::vector<EntityId> pool(80);
      std::iota(pool.begin(), pool.end(), EntityId{1});
      std::shuffle(pool.begin(), pool.end(), rng);
      pool.resize(len(rng));
      return pool;
    };
    const auto a = draw();
    const auto b = draw();
    const double p = persistence(rng);
    const std::size_t d = depth(rng);
    if (a.empty() || b.empty()) {
      const double want = a.empty() && b.empty() ? 1.0 : 0.0;
      worst = std::max(worst, std::abs(rbo(a, b, p, d) - want));
      continue;
    }
    worst = std::max(worst, std::abs(rbo(a, b, p, d) - oracle::rbo_brute_force(a, b, p, d)));
  }
  return {worst <= 1e-12, format("max |rbo - brute force| %.3e over 1000 pairs (<= 1e-12)", worst)};
}

template <typename Fn>
Outcome guarded(Fn fn) {
  try {
    return fn();
  } catch (const std::exception& ex) {
    return {false, std::string("threw: ") + ex.what()};
  }
}

}  // namespace

int main() {
  const Outcome c1 = guarded(losslessness);
  report(1, "losslessness", c1);
  report(2, "oracle-equivalence", guarded(oracle_equivalence));
  report(3, "procrustes-optimality", guarded(procrustes));
  const Outcome c5 = guarded(table_pattern);
  const Outcome c6 = guarded(chaining);
  const Outcome c8 = guarded(persistence);
  report(4, "orthogonality", guarded(orthogonality));
  report(5, "synthetic-table-pattern", c5);
  report(6, "chaining", c6);
  report(7, "linear-scaling", guarded(scaling));
  report(8, "persistence", c8);
  report(9, "rbo-definition", guarded(rbo_definition));
  std::printf("%s: %d of 9 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
