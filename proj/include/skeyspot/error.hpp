#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace skeyspot {

enum class ErrorCode {
  InvalidArgument,
  InvalidConfig,
  IoError,
  MalformedAnnotation,
  UnknownClass,
  OutOfRangeClass,
  InsufficientImages,
  UndefinedAP,
  UnknownImageId,
  EmptyGroundTruth,
  MismatchedReports,
  ModelLoadError,
  ClassCountMismatch,
  ImageDecodeError,
  AdapterShapeError,
  NegativeRate,
  EmptyReport,
  PayloadTooLarge,
  NoValidImages,
  UnknownJob,
  JobNotDone,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Domain error carrying a stable machine-readable code. Every failure the
/// library reports to callers is an `Error`; the CLI and HTTP layers render
/// `code()` verbatim.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace skeyspot
