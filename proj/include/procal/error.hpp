#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace procal {

// Distinct error classes; the CLI maps each to its own exit code.
enum class ErrorCode {
  kIo = 10,
  kMalformedHeader = 11,
  kMalformedRow = 18,
  kValueOutOfRange = 19,
  kPredictionMismatch = 28,
  kNonFinite = 12,
  kLabelOutOfRange = 13,
  kDuplicateId = 14,
  kConfidenceMismatch = 15,
  kPayloadLengthMismatch = 16,
  kMisalignedIds = 17,
  kInvalidArgument = 20,
  kReferenceTooSmall = 21,
  kDimensionMismatch = 22,
  kInsufficientData = 23,
  kInsufficientPartition = 24,
  kMissingProximity = 25,
  kNoConfidenceOverlap = 26,
  kMissingInput = 27,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

}  // namespace procal
