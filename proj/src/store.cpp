#include "olre/store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstring>
#include <ctime>
#include <sstream>

namespace olre {

namespace {

constexpr std::array<std::uint8_t, 4> kEmbeddingMagic{'O', 'L', 'R', 'E'};
constexpr std::array<std::uint8_t, 4> kTransformMagic{'O', 'L', 'R', 'T'};
constexpr std::uint16_t kFormatVersion = 1;

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                                                     std::uint8_t>>>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
}

template <typename T>
T get_le(const std::uint8_t* in) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                                                     std::uint8_t>>>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(U{in[i]} << (8 * i));
  return std::bit_cast<T>(bits);
}

std::uintmax_t file_size_or_throw(const fs::path& path) {
  std::error_code ec;
  const auto size = fs::file_size(path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot stat " + path.string() + ": " + ec.message());
  return size;
}

std::vector<std::uint8_t> read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes(file_size_or_throw(path));
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw Error(ErrorCode::IoError, "short read on " + path.string());
  return bytes;
}

// Write-then-rename so readers never see a partial file.
void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  fs::path temp = path;
  temp += ".tmp";
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot create " + temp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "write failed on " + temp.string());
  }
  std::error_code ec;
  fs::rename(temp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot rename onto " + path.string() + ": " + ec.message());
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  write_file_atomic(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::string read_text(const fs::path& path) {
  const auto bytes = read_all(path);
  return {bytes.begin(), bytes.end()};
}

nlohmann::json read_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::CorruptFile, path.string() + ": " + ex.what());
  }
}

void fsync_path(const fs::path& path) {
  const int fd = ::open(path.c_str(), O_RDONLY);
  if (fd >= 0) {
    ::fsync(fd);
    ::close(fd);
  }
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Role role_from_byte(std::uint8_t b, const fs::path& path) {
  if (b == 0) return Role::Item;
  if (b == 1) return Role::User;
  throw Error(ErrorCode::CorruptFile, path.string() + ": bad role byte " + std::to_string(b));
}

Precision precision_from_byte(std::uint8_t b, const fs::path& path) {
  if (b == 4) return Precision::F32;
  if (b == 8) return Precision::F64;
  throw Error(ErrorCode::CorruptFile, path.string() + ": bad precision byte " + std::to_string(b));
}

}  // namespace

std::string_view to_string(Precision precision) noexcept {
  return precision == Precision::F32 ? "f32" : "f64";
}

Precision parse_precision(std::string_view text) {
  if (text == "f32") return Precision::F32;
  if (text == "f64") return Precision::F64;
  throw Error(ErrorCode::InvalidArgument, "unknown precision '" + std::string(text) + "'");
}

std::string to_hex(const Digest& digest) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (std::uint8_t b : digest) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0xF]);
  }
  return out;
}

// --- Sha256 ----------------------------------------------------------------

struct Sha256::Context {
  EVP_MD_CTX* md = nullptr;
  ~Context() { EVP_MD_CTX_free(md); }
};

Sha256::Sha256() : ctx_(std::make_unique<Context>()) {
  ctx_->md = EVP_MD_CTX_new();
  if (ctx_->md == nullptr || EVP_DigestInit_ex(ctx_->md, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::IoError, "cannot initialise SHA-256");
  }
}

Sha256::~Sha256() = default;

void Sha256::update(std::span<const std::uint8_t> bytes) {
  if (!bytes.empty()) EVP_DigestUpdate(ctx_->md, bytes.data(), bytes.size());
}

Digest Sha256::finish() {
  Digest out{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx_->md, out.data(), &len);
  EVP_DigestInit_ex(ctx_->md, EVP_sha256(), nullptr);
  return out;
}

// --- EmbeddingWriter --------------------------------------------------------

EmbeddingWriter::EmbeddingWriter(const fs::path& path, const EmbeddingHeader& header)
    : path_(path), header_(header) {
  temp_ = path_;
  temp_ += ".partial";
  out_.open(temp_, std::ios::binary | std::ios::trunc);
  if (!out_) throw Error(ErrorCode::IoError, "cannot create " + temp_.string());

  std::vector<std::uint8_t> head(kEmbeddingMagic.begin(), kEmbeddingMagic.end());
  put_le(head, kFormatVersion);
  put_le(head, static_cast<std::uint8_t>(header_.role));
  put_le(head, static_cast<std::uint8_t>(header_.precision));
  put_le(head, header_.count);
  put_le(head, header_.dim);
  put_le(head, std::uint32_t{0});
  put(head);
  record_.reserve(8 + header_.dim * static_cast<std::size_t>(header_.precision));
}

EmbeddingWriter::~EmbeddingWriter() {
  if (!finished_) {
    out_.close();
    std::error_code ec;
    fs::remove(temp_, ec);
  }
}

void EmbeddingWriter::put(std::span<const std::uint8_t> bytes) {
  out_.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out_) throw Error(ErrorCode::IoError, "write failed on " + temp_.string());
  hash_.update(bytes);
}

void EmbeddingWriter::write(EntityId id, std::span<const double> row) {
  if (row.size() != header_.dim) {
    throw Error(ErrorCode::DimensionMismatch,
                "row width " + std::to_string(row.size()) + " != file dim " +
                    std::to_string(header_.dim));
  }
  if (written_ == header_.count) {
    throw Error(ErrorCode::InvalidArgument, "more records than declared in the header");
  }
  record_.clear();
  put_le(record_, id);
  for (double v : row) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "id " + std::to_string(id));
    if (header_.precision == Precision::F32) {
      const auto f = static_cast<float>(v);
      if (static_cast<double>(f) != v) {
        throw Error(ErrorCode::PrecisionLoss,
                    "id " + std::to_string(id) + " holds values not representable in f32");
      }
      put_le(record_, f);
    } else {
      put_le(record_, v);
    }
  }
  put(record_);
  ++written_;
}

Digest EmbeddingWriter::finish() {
  if (written_ != header_.count) {
    throw Error(ErrorCode::InvalidArgument,
                "wrote " + std::to_string(written_) + " of " + std::to_string(header_.count) +
                    " declared records");
  }
  const Digest digest = hash_.finish();
  out_.write(reinterpret_cast<const char*>(digest.data()), digest.size());
  out_.flush();
  if (!out_) throw Error(ErrorCode::IoError, "write failed on " + temp_.string());
  out_.close();
  std::error_code ec;
  fs::rename(temp_, path_, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot rename onto " + path_.string() + ": " + ec.message());
  finished_ = true;
  return digest;
}

// --- EmbeddingReader --------------------------------------------------------

EmbeddingReader::EmbeddingReader(const fs::path& path) : path_(path) {
  in_.open(path_, std::ios::binary);
  if (!in_) throw Error(ErrorCode::IoError, "cannot open " + path_.string());
  const auto size = file_size_or_throw(path_);
  if (size < kEmbeddingHeaderBytes + 32) {
    throw Error(ErrorCode::CorruptFile, path_.string() + ": too short for an embedding file");
  }
  std::array<std::uint8_t, kEmbeddingHeaderBytes> head{};
  get(head);
  if (!std::equal(kEmbeddingMagic.begin(), kEmbeddingMagic.end(), head.begin())) {
    throw Error(ErrorCode::CorruptFile, path_.string() + ": bad magic");
  }
  if (get_le<std::uint16_t>(&head[4]) != kFormatVersion) {
    throw Error(ErrorCode::CorruptFile, path_.string() + ": unsupported format version");
  }
  header_.role = role_from_byte(head[6], path_);
  header_.precision = precision_from_byte(head[7], path_);
  header_.count = get_le<std::uint64_t>(&head[8]);
  header_.dim = get_le<std::uint32_t>(&head[16]);
  if (get_le<std::uint32_t>(&head[20]) != 0) {
    throw Error(ErrorCode::CorruptFile, path_.string() + ": reserved field is non-zero");
  }
  const std::uintmax_t record_bytes =
      8 + std::uintmax_t{header_.dim} * static_cast<std::uintmax_t>(header_.precision);
  if (header_.count > (size - kEmbeddingHeaderBytes - 32) / record_bytes ||
      kEmbeddingHeaderBytes + header_.count * record_bytes + 32 != size) {
    throw Error(ErrorCode::CorruptFile,
                path_.string() + ": header declares " + std::to_string(header_.count) + "x" +
                    std::to_string(header_.dim) + " but file holds " + std::to_string(size) +
                    " bytes");
  }
  record_.resize(record_bytes);
}

void EmbeddingReader::get(std::span<std::uint8_t> bytes) {
  in_.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in_) throw Error(ErrorCode::IoError, "short read on " + path_.string());
  hash_.update(bytes);
}

bool EmbeddingReader::next(EntityId& id, std::span<double> row) {
  if (read_ == header_.count) return false;
  if (row.size() != header_.dim) {
    throw Error(ErrorCode::DimensionMismatch, "row buffer does not match file dim");
  }
  get(record_);
  id = get_le<std::uint64_t>(record_.data());
  const std::uint8_t* p = record_.data() + 8;
  if (header_.precision == Precision::F32) {
    for (auto& v : row) {
      v = static_cast<double>(get_le<float>(p));
      p += 4;
    }
  } else {
    for (auto& v : row) {
      v = get_le<double>(p);
      p += 8;
    }
  }
  ++read_;
  return true;
}

Digest EmbeddingReader::finish() {
  if (read_ != header_.count) {
    throw Error(ErrorCode::InvalidArgument, "records remain unread in " + path_.string());
  }
  const Digest computed = hash_.finish();
  Digest stored{};
  in_.read(reinterpret_cast<char*>(stored.data()), stored.size());
  if (!in_) throw Error(ErrorCode::IoError, "short read on " + path_.string());
  if (computed != stored) throw Error(ErrorCode::CorruptFile, path_.string() + ": checksum mismatch");
  return stored;
}

// --- whole-matrix helpers ---------------------------------------------------

Digest write_embeddings(const EmbeddingMatrix& emb, const fs::path& path, Precision precision) {
  EmbeddingWriter writer(path, {emb.role(), precision, emb.rows(),
                                static_cast<std::uint32_t>(emb.dim())});
  for (std::size_t i = 0; i < emb.rows(); ++i) writer.write(emb.ids()[i], emb.row(i));
  return writer.finish();
}

EmbeddingFile read_embeddings(const fs::path& path) {
  EmbeddingReader reader(path);
  const auto& h = reader.header();
  std::vector<EntityId> ids(h.count);
  Matrix vectors(static_cast<Eigen::Index>(h.count), static_cast<Eigen::Index>(h.dim));
  for (std::uint64_t i = 0; i < h.count; ++i) {
    reader.next(ids[i], {vectors.data() + i * h.dim, h.dim});
  }
  const Digest digest = reader.finish();
  return {EmbeddingMatrix(h.role, std::move(ids), std::move(vectors)), h.precision, digest};
}

EmbeddingMatrix round_to_f32(const EmbeddingMatrix& emb) {
  Matrix rounded = emb.vectors().cast<float>().cast<double>();
  return EmbeddingMatrix(emb.role(), emb.ids(), std::move(rounded));
}

// --- transforms -------------------------------------------------------------

nlohmann::json TransformMeta::to_json() const {
  return {{"kind", kind},
          {"run_id", run_id},
          {"reference_run_id", reference_run_id},
          {"spectrum", spectrum},
          {"rank_policy", rank_policy},
          {"output_dim", output_dim},
          {"checksum_algorithm", kChecksumAlgorithm}};
}

TransformMeta TransformMeta::from_json(const nlohmann::json& j) {
  try {
    TransformMeta m;
    m.kind = j.value("kind", "");
    m.run_id = j.value("run_id", "");
    m.reference_run_id = j.value("reference_run_id", "");
    m.spectrum = j.value("spectrum", std::vector<double>{});
    m.rank_policy = j.value("rank_policy", "strict");
    m.output_dim = j.value("output_dim", std::size_t{0});
    return m;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::CorruptFile, std::string("transform metadata: ") + ex.what());
  }
}

Matrix TransformFile::effective() const {
  if (meta && meta->output_dim > 0 && static_cast<Eigen::Index>(meta->output_dim) < stored.cols()) {
    return stored.leftCols(static_cast<Eigen::Index>(meta->output_dim));
  }
  return stored;
}

fs::path transform_sidecar(const fs::path& path) {
  fs::path out = path;
  out += ".meta";
  return out;
}

Digest write_transform(const Eigen::Ref<const Matrix>& m, const TransformMeta& meta,
                       const fs::path& path) {
  if (m.cols() > m.rows() || m.rows() == 0) {
    throw Error(ErrorCode::DimensionMismatch,
                "transform must be e x e' with 0 < e' <= e, got " + std::to_string(m.rows()) +
                    "x" + std::to_string(m.cols()));
  }
  require_finite(m, "transform");
  const auto dim = static_cast<std::uint32_t>(m.rows());
  std::vector<std::uint8_t> bytes(kTransformMagic.begin(), kTransformMagic.end());
  put_le(bytes, kFormatVersion);
  put_le(bytes, dim);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.rows(); ++j) put_le(bytes, j < m.cols() ? m(i, j) : 0.0);
  }
  Sha256 hash;
  hash.update(bytes);
  const Digest digest = hash.finish();
  bytes.insert(bytes.end(), digest.begin(), digest.end());

  TransformMeta sidecar = meta;
  sidecar.output_dim = static_cast<std::size_t>(m.cols());
  write_text_atomic(transform_sidecar(path), sidecar.to_json().dump(2) + "\n");
  write_file_atomic(path, bytes);
  return digest;
}

TransformFile read_transform(const fs::path& path) {
  const auto bytes = read_all(path);
  if (bytes.size() < kTransformHeaderBytes + 32 ||
      !std::equal(kTransformMagic.begin(), kTransformMagic.end(), bytes.begin())) {
    throw Error(ErrorCode::CorruptFile, path.string() + ": not a transform file");
  }
  if (get_le<std::uint16_t>(&bytes[4]) != kFormatVersion) {
    throw Error(ErrorCode::CorruptFile, path.string() + ": unsupported format version");
  }
  const std::uint64_t dim = get_le<std::uint32_t>(&bytes[6]);
  if (dim == 0 || kTransformHeaderBytes + dim * dim * 8 + 32 != bytes.size()) {
    throw Error(ErrorCode::CorruptFile,
                path.string() + ": header dim " + std::to_string(dim) +
                    " does not match payload length");
  }
  Sha256 hash;
  hash.update({bytes.data(), bytes.size() - 32});
  TransformFile out;
  out.digest = hash.finish();
  if (!std::equal(out.digest.begin(), out.digest.end(), bytes.end() - 32)) {
    throw Error(ErrorCode::CorruptFile, path.string() + ": checksum mismatch");
  }
  const auto n = static_cast<Eigen::Index>(dim);
  out.stored.resize(n, n);
  const std::uint8_t* p = bytes.data() + kTransformHeaderBytes;
  for (Eigen::Index i = 0; i < n * n; ++i, p += 8) out.stored.data()[i] = get_le<double>(p);

  const fs::path sidecar = transform_sidecar(path);
  if (fs::exists(sidecar)) {
    out.meta = TransformMeta::from_json(read_json(sidecar));
    if (out.meta->output_dim > dim) {
      throw Error(ErrorCode::CorruptFile, sidecar.string() + ": output_dim exceeds header dim");
    }
  }
  return out;
}

Digest verify_checksum(const fs::path& path) {
  const auto bytes = read_all(path);
  if (bytes.size() < 32) throw Error(ErrorCode::CorruptFile, path.string() + ": too short");
  Sha256 hash;
  hash.update({bytes.data(), bytes.size() - 32});
  const Digest digest = hash.finish();
  if (!std::equal(digest.begin(), digest.end(), bytes.end() - 32)) {
    throw Error(ErrorCode::CorruptFile, path.string() + ": checksum mismatch");
  }
  return digest;
}

// --- run store --------------------------------------------------------------

nlohmann::json RunRecord::to_json() const {
  return {{"run_id", run_id},
          {"reference_run_id", reference_run_id},
          {"created_at", created_at},
          {"e", e},
          {"spectrum", spectrum},
          {"rank_policy", rank_policy},
          {"dropped", dropped},
          {"overlap", overlap},
          {"files",
           {{"m_prime_items", m_prime_items},
            {"m_prime_users", m_prime_users},
            {"anchor", anchor},
            {"users", users},
            {"raw_items", raw_items},
            {"raw_users", raw_users}}},
          {"checksum_algorithm", checksum_algorithm},
          {"checksums", checksums}};
}

RunRecord RunRecord::from_json(const nlohmann::json& j) {
  try {
    RunRecord r;
    r.run_id = j.at("run_id").get<std::string>();
    r.reference_run_id = j.at("reference_run_id").get<std::string>();
    r.created_at = j.at("created_at").get<std::string>();
    r.e = j.at("e").get<std::size_t>();
    r.spectrum = j.at("spectrum").get<std::vector<double>>();
    r.rank_policy = j.at("rank_policy").get<std::string>();
    r.dropped = j.value("dropped", std::size_t{0});
    r.overlap = j.value("overlap", std::size_t{0});
    const auto& files = j.at("files");
    r.m_prime_items = files.at("m_prime_items").get<std::string>();
    r.m_prime_users = files.at("m_prime_users").get<std::string>();
    r.anchor = files.at("anchor").get<std::string>();
    r.users = files.at("users").get<std::string>();
    r.raw_items = files.at("raw_items").get<std::string>();
    r.raw_users = files.at("raw_users").get<std::string>();
    r.checksum_algorithm = j.at("checksum_algorithm").get<std::string>();
    r.checksums = j.at("checksums").get<std::map<std::string, std::string>>();
    return r;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::CorruptFile, std::string("run record: ") + ex.what());
  }
}

void validate_run_id(std::string_view run_id) {
  const bool ok = !run_id.empty() && run_id.front() != '.' &&
                  std::all_of(run_id.begin(), run_id.end(), [](char c) {
                    return std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' ||
                           c == '-';
                  });
  if (!ok) throw Error(ErrorCode::InvalidArgument, "invalid run id '" + std::string(run_id) + "'");
}

WriterLock::WriterLock(const fs::path& root) {
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + root.string() + ": " + ec.message());
  const fs::path lock = root / ".writer.lock";
  fd_ = ::open(lock.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error(ErrorCode::IoError, "cannot open " + lock.string());
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw Error(ErrorCode::ConcurrentWriter, "another writer holds " + lock.string());
  }
}

WriterLock::~WriterLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

RunStore::RunStore(fs::path root) : root_(std::move(root)) {}

fs::path RunStore::run_dir(std::string_view run_id) const {
  validate_run_id(run_id);
  return root_ / "runs" / std::string(run_id);
}

bool RunStore::has_run(std::string_view run_id) const {
  return fs::exists(run_dir(run_id) / "meta");
}

RunRecord RunStore::commit_run(const StabilizedRun& run, const EmbeddingMatrix& raw_items,
                               const EmbeddingMatrix& raw_users, const CommitOptions& options,
                               const WriterLock& /*lock*/) {
  const fs::path final_dir = run_dir(run.run_id);
  if (fs::exists(final_dir)) {
    throw Error(ErrorCode::RunExists, "run '" + run.run_id + "' is already committed");
  }
  const fs::path staging = root_ / "runs" / (".staging-" + run.run_id);
  std::error_code ec;
  fs::remove_all(staging, ec);
  fs::create_directories(staging, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + staging.string() + ": " + ec.message());

  RunRecord record;
  record.run_id = run.run_id;
  record.reference_run_id = run.reference_run_id;
  record.created_at = utc_now();
  record.e = run.m_prime_items.cols();
  record.spectrum.assign(run.spectrum().data(), run.spectrum().data() + run.spectrum().size());
  record.rank_policy = std::string(to_string(options.rank_policy));
  record.dropped = run.transform.dropped;
  record.overlap = run.overlap;

  const auto store_emb = [&](const EmbeddingMatrix& emb, Precision precision, const std::string& name) {
    const EmbeddingMatrix& out = precision == Precision::F32 ? round_to_f32(emb) : emb;
    record.checksums[name] = to_hex(write_embeddings(out, staging / name, precision));
  };
  store_emb(run.stabilized_items, options.stabilized_precision, record.anchor);
  store_emb(run.stabilized_users, options.stabilized_precision, record.users);
  store_emb(raw_items, options.raw_precision, record.raw_items);
  store_emb(raw_users, options.raw_precision, record.raw_users);

  TransformMeta meta;
  meta.run_id = run.run_id;
  meta.reference_run_id = run.reference_run_id;
  meta.spectrum = record.spectrum;
  meta.rank_policy = record.rank_policy;
  meta.kind = "m_prime_items";
  record.checksums[record.m_prime_items] =
      to_hex(write_transform(run.m_prime_items, meta, staging / record.m_prime_items));
  meta.kind = "m_prime_users";
  record.checksums[record.m_prime_users] =
      to_hex(write_transform(run.m_prime_users, meta, staging / record.m_prime_users));

  write_text_atomic(staging / "meta", record.to_json().dump(2) + "\n");
  fault("before_commit_rename");
  fs::rename(staging, final_dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot commit " + final_dir.string() + ": " + ec.message());
  fsync_path(final_dir.parent_path());
  return record;
}

RunRecord RunStore::load_record(std::string_view run_id) const {
  const fs::path meta = run_dir(run_id) / "meta";
  if (!fs::exists(meta)) {
    throw Error(ErrorCode::UnknownRun, "no committed run '" + std::string(run_id) + "' in " +
                                           root_.string());
  }
  return RunRecord::from_json(read_json(meta));
}

void RunStore::verify(const RunRecord& record) const {
  if (record.checksum_algorithm != kChecksumAlgorithm) {
    throw Error(ErrorCode::CorruptFile, "unsupported checksum algorithm " + record.checksum_algorithm);
  }
  const fs::path dir = run_dir(record.run_id);
  for (const auto& name : {record.anchor, record.users, record.raw_items, record.raw_users,
                           record.m_prime_items, record.m_prime_users}) {
    const fs::path file = dir / name;
    if (!fs::exists(file)) throw Error(ErrorCode::IoError, "missing artifact " + file.string());
    const auto it = record.checksums.find(name);
    if (it == record.checksums.end() || it->second != to_hex(verify_checksum(file))) {
      throw Error(ErrorCode::CorruptFile, file.string() + ": digest differs from run record");
    }
  }
  const auto check_dim = [&](std::size_t dim, const std::string& name) {
    if (dim != record.e) {
      throw Error(ErrorCode::CorruptFile, name + " has width " + std::to_string(dim) +
                                              ", run record says " + std::to_string(record.e));
    }
  };
  check_dim(EmbeddingReader(dir / record.anchor).header().dim, record.anchor);
  check_dim(EmbeddingReader(dir / record.users).header().dim, record.users);
  check_dim(static_cast<std::size_t>(read_transform(dir / record.m_prime_items).effective().cols()),
            record.m_prime_items);
  check_dim(static_cast<std::size_t>(read_transform(dir / record.m_prime_users).effective().cols()),
            record.m_prime_users);
}

std::optional<std::string> RunStore::latest_reference() const {
  const fs::path pointer = root_ / "latest_ref";
  if (!fs::exists(pointer)) return std::nullopt;
  std::istringstream in(read_text(pointer));
  std::string id;
  std::getline(in, id);
  if (id.empty()) throw Error(ErrorCode::CorruptFile, pointer.string() + " is empty");
  return id;
}

void RunStore::advance_reference(const RunRecord& record, const WriterLock& /*lock*/) {
  const RunRecord committed = load_record(record.run_id);
  verify(committed);

  const fs::path pointer = root_ / "latest_ref";
  fs::path temp = pointer;
  temp += ".tmp";
  {
    std::ofstream out(temp, std::ios::trunc);
    out << record.run_id << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + temp.string());
  }
  fsync_path(temp);
  fault("before_pointer_rename");
  std::error_code ec;
  fs::rename(temp, pointer, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot rename onto " + pointer.string() + ": " + ec.message());
  fsync_path(root_);

  std::ofstream history(root_ / "ref_history", std::ios::app);
  history << record.run_id << '\n';
  if (!history) throw Error(ErrorCode::IoError, "cannot append to ref_history");
}

std::vector<std::string> RunStore::reference_history() const {
  std::vector<std::string> out;
  const fs::path file = root_ / "ref_history";
  if (!fs::exists(file)) return out;
  std::istringstream in(read_text(file));
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

ReferenceSpace RunStore::load_reference(std::string_view run_id) const {
  const RunRecord record = load_record(run_id);
  return ReferenceSpace(record.run_id, read_embeddings(run_dir(run_id) / record.anchor).matrix);
}

EmbeddingPair RunStore::load_stabilized(std::string_view run_id) const {
  const RunRecord record = load_record(run_id);
  const fs::path dir = run_dir(run_id);
  return {read_embeddings(dir / record.anchor).matrix, read_embeddings(dir / record.users).matrix};
}

EmbeddingPair RunStore::load_raw(std::string_view run_id) const {
  const RunRecord record = load_record(run_id);
  const fs::path dir = run_dir(run_id);
  return {read_embeddings(dir / record.raw_items).matrix,
          read_embeddings(dir / record.raw_users).matrix};
}

}  // namespace olre
