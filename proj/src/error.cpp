#include "movseq/error.hpp"

namespace movseq {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::NonMonotonicTimestamps: return "NonMonotonicTimestamps";
    case ErrorCode::MissingRequiredChannel: return "MissingRequiredChannel";
    case ErrorCode::RateOutOfRange: return "RateOutOfRange";
    case ErrorCode::EmptySession: return "EmptySession";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::SliceTooShort: return "SliceTooShort";
    case ErrorCode::NoFundamental: return "NoFundamental";
    case ErrorCode::FactorizationFailure: return "FactorizationFailure";
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::NoPeaks: return "NoPeaks";
    case ErrorCode::DegenerateChain: return "DegenerateChain";
    case ErrorCode::TooFewRows: return "TooFewRows";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::Untestable: return "Untestable";
    case ErrorCode::MissingCondition: return "MissingCondition";
    case ErrorCode::DegenerateCovariance: return "DegenerateCovariance";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::EmptyTestSet: return "EmptyTestSet";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace movseq
