#include "procal/error.hpp"

namespace procal {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo: return "io error";
    case ErrorCode::kMalformedHeader: return "malformed header";
    case ErrorCode::kMalformedRow: return "malformed row";
    case ErrorCode::kValueOutOfRange: return "value out of range";
    case ErrorCode::kNonFinite: return "non-finite value";
    case ErrorCode::kLabelOutOfRange: return "label out of range";
    case ErrorCode::kDuplicateId: return "duplicate id";
    case ErrorCode::kConfidenceMismatch: return "confidence mismatch";
    case ErrorCode::kPredictionMismatch: return "prediction mismatch";
    case ErrorCode::kPayloadLengthMismatch: return "payload length mismatch";
    case ErrorCode::kMisalignedIds: return "misaligned ids";
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kReferenceTooSmall: return "reference too small";
    case ErrorCode::kDimensionMismatch: return "dimension mismatch";
    case ErrorCode::kInsufficientData: return "insufficient data";
    case ErrorCode::kInsufficientPartition: return "insufficient partition";
    case ErrorCode::kMissingProximity: return "missing proximity";
    case ErrorCode::kNoConfidenceOverlap: return "no confidence overlap";
    case ErrorCode::kMissingInput: return "missing input";
  }
  return "unknown error";
}

}  // namespace procal
