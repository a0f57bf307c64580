#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace remed {

enum class ErrorCode {
  kNotFound,
  kInvalidArgument,
  kDuplicate,
  kCycle,
  kParse,
  kLineage,
  kTranscriptExhausted,
  kTransport,
  kEmptyDataset,
  kDivergence,
  kIo,
  kConfig,
};

std::string_view to_string(ErrorCode code);

// Every recoverable failure in the library is an Error carrying a code, so
// callers can branch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace remed
