#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pixelmod {

enum class ErrorCode {
  kDecodeError,
  kTooSmall,
  kKindMismatch,
  kDuplicateId,
  kTooFewRecords,
  kIoError,
  kVersionMismatch,
  kChecksumMismatch,
  kProviderUnavailable,
  kMissingImage,
  kMissingFlag,
  kAlreadyMember,
  kUnknownImage,
  kValidation,
  kNotFound,
  kConflict,
  kManifestParse,
};

/// Stable snake_case name, used in API error bodies and CLI output.
std::string_view error_code_name(ErrorCode code);
/// Inverse of error_code_name; nullopt for unknown names.
std::optional<ErrorCode> parse_error_code(std::string_view name);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace pixelmod
