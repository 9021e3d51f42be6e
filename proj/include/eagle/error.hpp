#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace eagle {

enum class ErrorCode {
  ShapeMismatch,
  EmptyInput,
  NonScalarLoss,
  BatchTooSmall,
  InvalidProbability,
  HeadDivisibility,
  NonFinite,
  MissingFile,
  DimensionMismatch,
  DuplicateId,
  NoEvents,
  AllMissingFeature,
  SchemaMismatch,
  TooFewRecords,
  InvalidConfig,
  NoEventsInBatch,
  DegenerateSplit,
  AllZeroEncodings,
  ZeroTotalScore,
  InvalidSteps,
  NoComparablePairs,
  TooFewPatients,
  DegenerateGroups,
  ParseError,
  IoError,
};

std::string_view to_string(ErrorCode code);

// Every failure carries a code; the message names the stage and field.
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

}  // namespace eagle
