#include "pixelmod/error.hpp"

namespace pixelmod {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDecodeError: return "decode_error";
    case ErrorCode::kTooSmall: return "too_small";
    case ErrorCode::kKindMismatch: return "kind_mismatch";
    case ErrorCode::kDuplicateId: return "duplicate_id";
    case ErrorCode::kTooFewRecords: return "too_few_records";
    case ErrorCode::kIoError: return "io_error";
    case ErrorCode::kVersionMismatch: return "version_mismatch";
    case ErrorCode::kChecksumMismatch: return "checksum_mismatch";
    case ErrorCode::kProviderUnavailable: return "provider_unavailable";
    case ErrorCode::kMissingImage: return "missing_image";
    case ErrorCode::kMissingFlag: return "missing_flag";
    case ErrorCode::kAlreadyMember: return "already_member";
    case ErrorCode::kUnknownImage: return "unknown_image";
    case ErrorCode::kValidation: return "validation";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kConflict: return "conflict";
    case ErrorCode::kManifestParse: return "manifest_parse";
  }
  return "unknown";
}

std::optional<ErrorCode> parse_error_code(std::string_view name) {
  for (int i = 0; i <= static_cast<int>(ErrorCode::kManifestParse); ++i) {
    const auto code = static_cast<ErrorCode>(i);
    if (error_code_name(code) == name) return code;
  }
  return std::nullopt;
}

}  // namespace pixelmod
