#include "olre/error.hpp"

namespace olre {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::InsufficientOverlap: return "InsufficientOverlap";
    case ErrorCode::EmptyIntersection: return "EmptyIntersection";
    case ErrorCode::ZeroNormRow: return "ZeroNormRow";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::InvalidPersistence: return "InvalidPersistence";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::RoleMismatch: return "RoleMismatch";
    case ErrorCode::PrecisionLoss: return "PrecisionLoss";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::UnknownRun: return "UnknownRun";
    case ErrorCode::RunExists: return "RunExists";
    case ErrorCode::ConcurrentWriter: return "ConcurrentWriter";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace olre
