#include "remed/common/error.hpp"

namespace remed {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound: return "not-found";
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kDuplicate: return "duplicate";
    case ErrorCode::kCycle: return "dependency-cycle";
    case ErrorCode::kParse: return "parse-error";
    case ErrorCode::kLineage: return "lineage-mismatch";
    case ErrorCode::kTranscriptExhausted: return "transcript-exhausted";
    case ErrorCode::kTransport: return "transport";
    case ErrorCode::kEmptyDataset: return "empty-dataset";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kConfig: return "config";
  }
  return "unknown";
}

}  // namespace remed
