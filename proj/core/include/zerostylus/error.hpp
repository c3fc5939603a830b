#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace zerostylus {

enum class ErrorCode {
  InvalidArgument,
  EmptyDocument,
  NoEligibleAuthor,
  EmptyText,
  EmptyList,
  ZeroVector,
  DimensionMismatch,
  BackendMismatch,
  BackendUnavailable,
  EmptyRepo,
  VersionMismatch,
  CorruptFile,
  ContextOverflow,
  ConfigError,
  RangeError,
  EmptyCohort,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace zerostylus
