#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace demux {

enum class ErrorCode {
  // core-model
  EmptyInput,
  MissingAlignment,
  IndexOutOfRange,
  EmptyTargetPool,
  DimensionMismatch,
  // uncertainty
  FewerThanTwoClasses,
  EmptySequence,
  NonPositiveProbability,
  NonFiniteValue,
  ScorerTaskMismatch,
  // knn-index
  EmptySource,
  NonPositiveK,
  // selection
  EmptyPool,
  UnknownLanguageTags,
  InsufficientPerLanguagePool,
  // orchestrator
  BudgetExhausted,
  ProviderFailure,
  // dataset-io
  BadMagic,
  VersionMismatch,
  TruncatedTensor,
  InvariantViolation,
  IOFailure,
  ParseError,
  // simulator / analysis
  DegenerateCovariance,
  EmptyTrainingSet,
  ConstantVector,
  EmptyPlan,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the engine. The code is stable and is what the CLI
/// maps onto exit statuses; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace demux
