#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>

#include <json.hpp>

#include "olre/stabilizer.hpp"

namespace olre {

namespace fs = std::filesystem;

enum class Precision : std::uint8_t { F32 = 4, F64 = 8 };

std::string_view to_string(Precision precision) noexcept;
Precision parse_precision(std::string_view text);

using Digest = std::array<std::uint8_t, 32>;
inline constexpr std::string_view kChecksumAlgorithm = "sha256";

std::string to_hex(const Digest& digest);

/// Incremental SHA-256.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(std::span<const std::uint8_t> bytes);
  Digest finish();

 private:
  struct Context;
  std::unique_ptr<Context> ctx_;
};

// ---------------------------------------------------------------------------
// Embedding files (.emb)
//
//   "OLRE" | version u16 = 1 | role u8 | precision u8 | count u64 | dim u32 |
//   reserved u32 = 0 | count x (id u64, dim x f32|f64) | sha256 of all prior bytes
//
// All fields little-endian.
// ---------------------------------------------------------------------------

inline constexpr std::size_t kEmbeddingHeaderBytes = 24;

struct EmbeddingHeader {
  Role role = Role::Item;
  Precision precision = Precision::F32;
  std::uint64_t count = 0;
  std::uint32_t dim = 0;
};

/// Streams records to `path`. Output goes to a temporary sibling that is
/// renamed into place by finish(); an unfinished writer leaves no file.
class EmbeddingWriter {
 public:
  EmbeddingWriter(const fs::path& path, const EmbeddingHeader& header);
  ~EmbeddingWriter();
  EmbeddingWriter(const EmbeddingWriter&) = delete;
  EmbeddingWriter& operator=(const EmbeddingWriter&) = delete;

  /// Throws PrecisionLoss when an f32 file would round a value.
  void write(EntityId id, std::span<const double> row);
  Digest finish();

 private:
  void put(std::span<const std::uint8_t> bytes);

  fs::path path_;
  fs::path temp_;
  EmbeddingHeader header_;
  std::ofstream out_;
  Sha256 hash_;
  std::uint64_t written_ = 0;
  std::vector<std::uint8_t> record_;
  bool finished_ = false;
};

/// Streams records from an embedding file; finish() verifies the checksum.
class EmbeddingReader {
 public:
  explicit EmbeddingReader(const fs::path& path);

  const EmbeddingHeader& header() const noexcept { return header_; }

  /// Reads the next record into `row` (size must equal dim); false at end.
  bool next(EntityId& id, std::span<double> row);
  Digest finish();

 private:
  void get(std::span<std::uint8_t> bytes);

  fs::path path_;
  std::ifstream in_;
  EmbeddingHeader header_;
  Sha256 hash_;
  std::uint64_t read_ = 0;
  std::vector<std::uint8_t> record_;
};

struct EmbeddingFile {
  EmbeddingMatrix matrix;
  Precision precision = Precision::F32;
  Digest digest{};
};

Digest write_embeddings(const EmbeddingMatrix& emb, const fs::path& path,
                        Precision precision = Precision::F32);
EmbeddingFile read_embeddings(const fs::path& path);

/// Explicit downcast: every entry rounded to the nearest float.
EmbeddingMatrix round_to_f32(const EmbeddingMatrix& emb);

// ---------------------------------------------------------------------------
// Transform files (.olt)
//
//   "OLRT" | version u16 = 1 | dim u32 | dim*dim f64 row-major | sha256
//
// Metadata lives in a JSON sidecar next to the file (`<path>.meta`). A
// truncated dim x e' transform is stored zero-padded to dim x dim with
// output_dim = e' in the sidecar.
// ---------------------------------------------------------------------------

inline constexpr std::size_t kTransformHeaderBytes = 10;

struct TransformMeta {
  std::string kind;  // "m_prime_items", "m_prime_users", ...
  std::string run_id;
  std::string reference_run_id;
  std::vector<double> spectrum;
  std::string rank_policy = "strict";
  std::size_t output_dim = 0;

  nlohmann::json to_json() const;
  static TransformMeta from_json(const nlohmann::json& j);
};

struct TransformFile {
  Matrix stored;  // dim x dim as on disk
  std::optional<TransformMeta> meta;
  Digest digest{};

  /// The stored matrix restricted to its meaningful columns.
  Matrix effective() const;
};

fs::path transform_sidecar(const fs::path& path);
Digest write_transform(const Eigen::Ref<const Matrix>& m, const TransformMeta& meta,
                       const fs::path& path);
TransformFile read_transform(const fs::path& path);

/// Recomputes the trailing digest of an .emb or .olt file; CorruptFile on mismatch.
Digest verify_checksum(const fs::path& path);

// ---------------------------------------------------------------------------
// Run store
//
//   <root>/runs/<run_id>/{items.emb, users.emb, mT.olt, mW.olt, meta,
//                         raw_items.emb, raw_users.emb}
//   <root>/latest_ref      run id of the current anchor, one line
//   <root>/ref_history     every run id ever pointed to, in order
// ---------------------------------------------------------------------------

struct RunRecord {
  std::string run_id;
  std::string reference_run_id;
  std::string created_at;  // UTC, ISO 8601
  std::size_t e = 0;
  std::vector<double> spectrum;
  std::string rank_policy = "strict";
  std::size_t dropped = 0;
  std::size_t overlap = 0;
  std::string m_prime_items = "mT.olt";
  std::string m_prime_users = "mW.olt";
  std::string anchor = "items.emb";
  std::string users = "users.emb";
  std::string raw_items = "raw_items.emb";
  std::string raw_users = "raw_users.emb";
  std::string checksum_algorithm{kChecksumAlgorithm};
  std::map<std::string, std::string> checksums;  // file name -> hex digest

  nlohmann::json to_json() const;
  static RunRecord from_json(const nlohmann::json& j);
};

/// Exclusive advisory lock on the store; proof of the single-writer role.
class WriterLock {
 public:
  explicit WriterLock(const fs::path& root);  // throws ConcurrentWriter
  ~WriterLock();
  WriterLock(const WriterLock&) = delete;
  WriterLock& operator=(const WriterLock&) = delete;

 private:
  int fd_ = -1;
};

struct CommitOptions {
  Precision stabilized_precision = Precision::F32;
  Precision raw_precision = Precision::F32;
  RankPolicy rank_policy = RankPolicy::Strict;
};

class RunStore {
 public:
  // Called with a stage name at crash-relevant points; tests throw from it.
  using FaultHook = std::function<void(std::string_view stage)>;

  explicit RunStore(fs::path root);

  const fs::path& root() const noexcept { return root_; }
  fs::path run_dir(std::string_view run_id) const;
  bool has_run(std::string_view run_id) const;

  /// Writes a new run directory atomically. Stabilized tables are rounded to
  /// f32 first when options.stabilized_precision is F32. Never overwrites.
  RunRecord commit_run(const StabilizedRun& run, const EmbeddingMatrix& raw_items,
                       const EmbeddingMatrix& raw_users, const CommitOptions& options,
                       const WriterLock& lock);

  RunRecord load_record(std::string_view run_id) const;

  /// Checks every referenced file exists, matches its recorded digest, and
  /// agrees on e.
  void verify(const RunRecord& record) const;

  std::optional<std::string> latest_reference() const;

  /// Points latest_ref at `record` via write-then-rename.
  void advance_reference(const RunRecord& record, const WriterLock& lock);

  std::vector<std::string> reference_history() const;

  ReferenceSpace load_reference(std::string_view run_id) const;
  EmbeddingPair load_stabilized(std::string_view run_id) const;
  EmbeddingPair load_raw(std::string_view run_id) const;

  void set_fault_hook(FaultHook hook) { fault_hook_ = std::move(hook); }

 private:
  void fault(std::string_view stage) const {
    if (fault_hook_) fault_hook_(stage);
  }

  fs::path root_;
  FaultHook fault_hook_;
};

/// Run ids become directory names: [A-Za-z0-9._-], not starting with '.'.
void validate_run_id(std::string_view run_id);

}  // namespace olre
