#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sptok {

enum class ErrorCode {
  kEmptyMask,
  kIndexOutOfRange,
  kShapeMismatch,
  kUnknownParameter,
  kFrozenParameter,
  kEmptyTrainableSet,
  kNonDeterministicLoss,
  kEmptyWaveform,
  kInsufficientData,
  kDimensionMismatch,
  kAlreadyFiltered,
  kSingleLayerGrid,
  kUnknownToken,
  kTargetUnreachable,
  kCountExceedsVocab,
  kEmptyText,
  kContextOverflow,
  kNoAudioPositions,
  kNoTrainableParams,
  kUnknownTarget,
  kMissingHead,
  kEmptySplit,
  kHeterogeneousHeads,
  kLengthMismatch,
  kLabelOutOfRange,
  kSchemaError,
  kUnknownLabel,
  kInvalidSpec,
  kEmptyCorpus,
  kMissingPrerequisite,
  kInvalidConfig,
  kInvalidArgument,
  kIoError,
  kFormatError,
  kNumericalFailure,
};

std::string_view error_code_name(ErrorCode code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace sptok
