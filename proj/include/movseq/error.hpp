#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace movseq {

enum class ErrorCode {
  MalformedRow,
  NonMonotonicTimestamps,
  MissingRequiredChannel,
  RateOutOfRange,
  EmptySession,
  TooFewSamples,
  SliceTooShort,
  NoFundamental,
  FactorizationFailure,
  InvalidInput,
  NoPeaks,
  DegenerateChain,
  TooFewRows,
  SchemaMismatch,
  Untestable,
  MissingCondition,
  DegenerateCovariance,
  NonFiniteLoss,
  EmptyTestSet,
  ConfigError,
  IoError,
};

std::string_view to_string(ErrorCode code);

// Every failure surfaced by the library carries one of the codes above so
// callers (and the CLI's error JSON) can branch on it without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace movseq
