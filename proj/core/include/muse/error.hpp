#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace muse {

enum class ErrorCode {
  InvalidArgument,
  MalformedRecord,
  DuplicateId,
  EmptyText,
  EmptyCompletion,
  UnparseableCompletion,
  ProviderUnavailable,
  ProviderMalformedResponse,
  AuthFailure,
  DimMismatch,
  KTooLarge,
  UniverseMismatch,
  CyclicInput,
  CorruptFile,
  VersionMismatch,
  NoAnchor,
  UnknownNode,
  BindFailure,
  SnapshotCorrupt,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (CLI, HTTP layer) can map it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace muse
