#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace olre {

enum class ErrorCode {
  DimensionMismatch,
  RankDeficient,
  NonFinite,
  InsufficientOverlap,
  EmptyIntersection,
  ZeroNormRow,
  DuplicateId,
  InvalidPersistence,
  InvalidArgument,
  InvalidConfig,
  RoleMismatch,
  PrecisionLoss,
  CorruptFile,
  UnknownRun,
  RunExists,
  ConcurrentWriter,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure raised by the library carries a code so callers (the CLI in
// particular) can map it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace olre
