#include "sggr/error.hpp"

namespace sggr {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::KeyFormat: return "KEY_FORMAT";
    case ErrorCode::MissingEmbedding: return "MISSING_EMBEDDING";
    case ErrorCode::ProviderUnavailable: return "PROVIDER_UNAVAILABLE";
    case ErrorCode::DimMismatch: return "DIM_MISMATCH";
    case ErrorCode::InvalidVector: return "INVALID_VECTOR";
    case ErrorCode::EmptyInput: return "EMPTY_INPUT";
    case ErrorCode::EmptyBatch: return "EMPTY_BATCH";
    case ErrorCode::EmptySequence: return "EMPTY_SEQUENCE";
    case ErrorCode::UnknownPredicate: return "UNKNOWN_PREDICATE";
    case ErrorCode::GroupTooSmall: return "GROUP_TOO_SMALL";
    case ErrorCode::LenMismatch: return "LEN_MISMATCH";
    case ErrorCode::VocabTooSmall: return "VOCAB_TOO_SMALL";
    case ErrorCode::SerializeInvalidGraph: return "SERIALIZE_INVALID_GRAPH";
    case ErrorCode::InvalidConfig: return "INVALID_CONFIG";
    case ErrorCode::InvalidInput: return "INVALID_INPUT";
    case ErrorCode::Io: return "IO_ERROR";
  }
  return "UNKNOWN";
}

}  // namespace sggr
