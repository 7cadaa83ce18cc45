#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace encqr {

enum class ErrorCode {
  InvalidArgument,
  SeriesTooShort,
  InvalidWindow,
  EmptyResidualSet,
  ShapeError,
  NoTrainingData,
  NotFitted,
  SubsetsTooSmall,
  EmptyAggregate,
  NoOutOfSampleLearner,
  BatchSizeMismatch,
  ProtocolError,
  DegenerateRange,
  MissingColumn,
  NonUniformResolution,
  ParseError,
  PartitionTooSmall,
  ConfigError,
  FormatError,
  IoError,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library; `code()` identifies the failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  /// The message without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace encqr
