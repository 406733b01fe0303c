#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sggr {

enum class ErrorCode {
  KeyFormat,
  MissingEmbedding,
  ProviderUnavailable,
  DimMismatch,
  InvalidVector,
  EmptyInput,
  EmptyBatch,
  EmptySequence,
  UnknownPredicate,
  GroupTooSmall,
  LenMismatch,
  VocabTooSmall,
  SerializeInvalidGraph,
  InvalidConfig,
  InvalidInput,
  Io,
};

/// Machine-readable name, e.g. "MISSING_EMBEDDING".
std::string_view to_string(ErrorCode code) noexcept;

struct Error : public std::runtime_error {
  ErrorCode code;
  Error(ErrorCode code_, const std::string& message)
      : std::runtime_error(std::string(to_string(code_)) + ": " + message), code(code_) {}
};

// Remote embedding failures carry enough context for the caller to decide on a retry.
struct ProviderUnavailable : public Error {
  int attempts;
  int last_status;  // 0 when no HTTP response was received
  ProviderUnavailable(const std::string& message, int attempts_, int last_status_)
      : Error(ErrorCode::ProviderUnavailable, message), attempts(attempts_), last_status(last_status_) {}
};

}  // namespace sggr
