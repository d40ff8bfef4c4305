#include "demux/error.hpp"

namespace demux {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::MissingAlignment: return "MissingAlignment";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::EmptyTargetPool: return "EmptyTargetPool";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::FewerThanTwoClasses: return "FewerThanTwoClasses";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::NonPositiveProbability: return "NonPositiveProbability";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::ScorerTaskMismatch: return "ScorerTaskMismatch";
    case ErrorCode::EmptySource: return "EmptySource";
    case ErrorCode::NonPositiveK: return "NonPositiveK";
    case ErrorCode::EmptyPool: return "EmptyPool";
    case ErrorCode::UnknownLanguageTags: return "UnknownLanguageTags";
    case ErrorCode::InsufficientPerLanguagePool: return "InsufficientPerLanguagePool";
    case ErrorCode::BudgetExhausted: return "BudgetExhausted";
    case ErrorCode::ProviderFailure: return "ProviderFailure";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::TruncatedTensor: return "TruncatedTensor";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::IOFailure: return "IOFailure";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DegenerateCovariance: return "DegenerateCovariance";
    case ErrorCode::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorCode::ConstantVector: return "ConstantVector";
    case ErrorCode::EmptyPlan: return "EmptyPlan";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace demux
