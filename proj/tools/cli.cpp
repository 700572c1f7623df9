#include "cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "olre/metrics.hpp"
#include "olre/simd/kernels.hpp"
#include "olre/simulator.hpp"
#include "olre/stabilizer.hpp"
#include "olre/store.hpp"

namespace olre::cli {

namespace {

struct PipelineArgs {
  std::string items;
  std::string users;
  std::string run_id;
  std::string out;
  std::string rank_policy = "strict";
  std::string precision = "f32";
  std::optional<std::string> ref;
  std::optional<std::size_t> min_overlap;
  bool no_advance = false;
};

struct ValidateArgs {
  std::string store = ".";
  std::string run_a;
  std::string run_b;
  bool raw = false;
  std::size_t top_k = 100;
  double rbo_p = 0.9;
  bool lenient = false;
  std::optional<std::string> out;
};

struct SimulateArgs {
  std::string config;
  std::size_t runs = 1;
  std::string out;
  std::string precision = "f32";
};

struct ApplyArgs {
  std::string emb;
  std::string transform;
  std::string out;
};

EmbeddingFile load_role(const std::string& path, Role expected) {
  EmbeddingFile file = read_embeddings(path);
  if (file.matrix.role() != expected) {
    throw Error(ErrorCode::RoleMismatch, path + " holds " + std::string(to_string(file.matrix.role())) +
                                             " embeddings, expected " +
                                             std::string(to_string(expected)));
  }
  return file;
}

void report_warnings(const StabilizedRun& run, std::ostream& err) {
  if (run.transform.dropped > 0) {
    err << "warning: truncated " << run.transform.dropped
        << " rank-deficient component(s); stabilized dimension is " << run.transform.output_dim()
        << "\n";
  }
  if (run.alignment.degenerate) {
    err << "warning: item cross-covariance is rank deficient; alignment is not unique\n";
  }
}

void persist(const PipelineArgs& args, const StabilizedRun& run, const EmbeddingFile& items,
             const EmbeddingFile& users, bool advance, std::ostream& err) {
  RunStore store(args.out);
  WriterLock lock(store.root());
  CommitOptions options;
  options.stabilized_precision = parse_precision(args.precision);
  options.raw_precision = items.precision == Precision::F64 || users.precision == Precision::F64
                              ? Precision::F64
                              : Precision::F32;
  options.rank_policy = parse_rank_policy(args.rank_policy);
  const RunRecord record = store.commit_run(run, items.matrix, users.matrix, options, lock);
  if (advance) store.advance_reference(record, lock);
  err << "run '" << record.run_id << "' stored in " << store.run_dir(record.run_id).string()
      << " (e = " << record.e << ", reference '" << record.reference_run_id << "')\n";
}

int cmd_init(const PipelineArgs& args, std::ostream& err) {
  validate_run_id(args.run_id);
  const EmbeddingFile items = load_role(args.items, Role::Item);
  const EmbeddingFile users = load_role(args.users, Role::User);
  StabilizeOptions options;
  options.lowrank.policy = parse_rank_policy(args.rank_policy);
  const auto result = init_reference(items.matrix, users.matrix, args.run_id, options);
  report_warnings(result.run, err);
  persist(args, result.run, items, users, true, err);
  return kOk;
}

int cmd_stabilize(const PipelineArgs& args, std::ostream& err) {
  validate_run_id(args.run_id);
  RunStore store(args.out);
  std::string ref_id;
  if (args.ref) {
    ref_id = *args.ref;
  } else if (auto latest = store.latest_reference()) {
    ref_id = *latest;
  } else {
    throw Error(ErrorCode::UnknownRun, "store " + args.out + " has no reference; run `init` first");
  }
  const ReferenceSpace ref = store.load_reference(ref_id);
  const EmbeddingFile items = load_role(args.items, Role::Item);
  const EmbeddingFile users = load_role(args.users, Role::User);
  StabilizeOptions options;
  options.lowrank.policy = parse_rank_policy(args.rank_policy);
  options.min_overlap = args.min_overlap;
  const auto result = stabilize_run(items.matrix, users.matrix, ref, args.run_id, options);
  report_warnings(result.run, err);
  persist(args, result.run, items, users, !args.no_advance, err);
  return kOk;
}

int cmd_validate(const ValidateArgs& args, std::ostream& out, std::ostream& err) {
  RunStore store(args.store);
  const EmbeddingPair a = args.raw ? store.load_raw(args.run_a) : store.load_stabilized(args.run_a);
  const EmbeddingPair b = args.raw ? store.load_raw(args.run_b) : store.load_stabilized(args.run_b);
  MetricsOptions options;
  options.top_k = args.top_k;
  options.rbo_persistence = args.rbo_p;
  options.zero_norm = args.lenient ? ZeroNormPolicy::Lenient : ZeroNormPolicy::Strict;
  MetricsReport report = compare_runs(a.items, a.users, b.items, b.users, options);
  report.run_a = args.run_a;
  report.run_b = args.run_b;
  report.stabilized = !args.raw;
  if (report.excluded_zero_norm > 0) {
    err << "warning: excluded " << report.excluded_zero_norm << " zero-norm row(s)\n";
  }

  const std::string text = to_key_value_text(report);
  if (args.out) {
    std::ofstream kv(*args.out);
    kv << text;
    std::ofstream js(*args.out + ".json");
    js << to_json(report).dump(2) << '\n';
    if (!kv || !js) throw Error(ErrorCode::IoError, "cannot write report to " + *args.out);
  } else {
    out << text;
  }
  return kOk;
}

int cmd_simulate(const SimulateArgs& args, std::ostream& err) {
  std::ifstream in(args.config);
  if (!in) throw Error(ErrorCode::IoError, "cannot open config " + args.config);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::InvalidConfig, args.config + ": " + ex.what());
  }
  const SimConfig cfg = SimConfig::from_json(j);
  const Precision precision = parse_precision(args.precision);

  std::error_code ec;
  fs::create_directories(args.out, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + args.out + ": " + ec.message());

  const auto save = [&](const EmbeddingPair& pair, std::size_t k) {
    const fs::path dir(args.out);
    const std::string stem = "run_" + std::to_string(k);
    const auto write = [&](const EmbeddingMatrix& m, const std::string& name) {
      write_embeddings(precision == Precision::F32 ? round_to_f32(m) : m, dir / name, precision);
    };
    write(pair.items, stem + "_items.emb");
    write(pair.users, stem + "_users.emb");
  };
  const EmbeddingPair base = gen_ground_truth(cfg);
  save(base, 0);
  for (std::size_t k = 1; k <= args.runs; ++k) save(gen_retrained_run(base, cfg, k), k);
  err << "wrote " << 2 * (args.runs + 1) << " embedding files to " << args.out << "\n";
  return kOk;
}

int cmd_apply(const ApplyArgs& args, std::ostream& err) {
  const TransformFile transform = read_transform(args.transform);
  const Matrix m = transform.effective();
  EmbeddingReader reader(args.emb);
  const EmbeddingHeader in_header = reader.header();
  if (in_header.dim != static_cast<std::uint32_t>(m.rows())) {
    throw Error(ErrorCode::DimensionMismatch,
                "embedding dim " + std::to_string(in_header.dim) + " != transform dim " +
                    std::to_string(m.rows()));
  }
  EmbeddingHeader out_header = in_header;
  out_header.dim = static_cast<std::uint32_t>(m.cols());

  const auto& kernels = simd::active_kernels();
  std::vector<double> row(in_header.dim);
  std::vector<double> mapped(out_header.dim);
  {
    EmbeddingWriter writer(args.out, out_header);
    EntityId id = 0;
    while (reader.next(id, row)) {
      kernels.row_times_matrix(row.data(), row.size(), m.data(), mapped.size(), mapped.data());
      if (out_header.precision == Precision::F32) {
        for (double& v : mapped) v = static_cast<double>(static_cast<float>(v));
      }
      writer.write(id, mapped);
    }
    // Verify the input before the output becomes visible.
    reader.finish();
    writer.finish();
  }
  err << "applied " << m.rows() << "x" << m.cols() << " transform to " << in_header.count
      << " rows\n";
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Orthogonal low-rank embedding stabilization"};
  app.require_subcommand(1);

  PipelineArgs init_args;
  auto* init = app.add_subcommand("init", "Seed the standard space from a reference run");
  init->add_option("--items", init_args.items, "Item embedding file")->required();
  init->add_option("--users", init_args.users, "User embedding file")->required();
  init->add_option("--run-id", init_args.run_id, "Identifier for this run")->required();
  init->add_option("--out", init_args.out, "Store directory")->required();
  init->add_option("--rank-policy", init_args.rank_policy, "strict | truncate");
  init->add_option("--precision", init_args.precision, "Stored embedding precision: f32 | f64");

  PipelineArgs stab_args;
  auto* stab = app.add_subcommand("stabilize", "Map a run into the standard space");
  stab->add_option("--items", stab_args.items, "Item embedding file")->required();
  stab->add_option("--users", stab_args.users, "User embedding file")->required();
  stab->add_option("--run-id", stab_args.run_id, "Identifier for this run")->required();
  stab->add_option("--out", stab_args.out, "Store directory")->required();
  stab->add_option("--ref", stab_args.ref, "Reference run id (default: latest)");
  stab->add_option("--rank-policy", stab_args.rank_policy, "strict | truncate");
  stab->add_option("--min-overlap", stab_args.min_overlap, "Minimum shared item ids");
  stab->add_option("--precision", stab_args.precision, "Stored embedding precision: f32 | f64");
  stab->add_flag("--no-advance", stab_args.no_advance, "Keep the current latest reference");

  ValidateArgs val_args;
  auto* val = app.add_subcommand("validate", "Compare two stored runs");
  val->add_option("--store", val_args.store, "Store directory");
  val->add_option("--run-a", val_args.run_a, "Baseline run")->required();
  val->add_option("--run-b", val_args.run_b, "Compared run")->required();
  val->add_flag("--raw", val_args.raw, "Compare unstabilized embeddings");
  val->add_option("--top-k", val_args.top_k, "Ranking depth for RBO")->check(CLI::PositiveNumber);
  val->add_option("--rbo-p", val_args.rbo_p, "RBO persistence in (0, 1)");
  val->add_flag("--lenient", val_args.lenient, "Skip zero-norm rows instead of failing");
  val->add_option("--out", val_args.out, "Report path (key = value); also writes <out>.json");

  SimulateArgs sim_args;
  auto* sim = app.add_subcommand("simulate", "Generate synthetic retraining runs");
  sim->add_option("--config", sim_args.config, "JSON simulation config")->required();
  sim->add_option("--runs", sim_args.runs, "Number of retrained runs")->required();
  sim->add_option("--out", sim_args.out, "Output directory")->required();
  sim->add_option("--precision", sim_args.precision, "f32 | f64");

  ApplyArgs apply_args;
  auto* apply = app.add_subcommand("apply", "Stream an embedding file through a transform");
  apply->add_option("--emb", apply_args.emb, "Input embedding file")->required();
  apply->add_option("--transform", apply_args.transform, "Transform file (.olt)")->required();
  apply->add_option("--out", apply_args.out, "Output embedding file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kValidationError;
  }

  try {
    if (*init) return cmd_init(init_args, err);
    if (*stab) return cmd_stabilize(stab_args, err);
    if (*val) return cmd_validate(val_args, out, err);
    if (*sim) return cmd_simulate(sim_args, err);
    if (*apply) return cmd_apply(apply_args, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::IoError ? kIoError : kValidationError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kIoError;
  }
  return kValidationError;
}

}  // namespace olre::cli
