#include "sptok/error.hpp"

namespace sptok {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kEmptyMask: return "EmptyMask";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kUnknownParameter: return "UnknownParameter";
    case ErrorCode::kFrozenParameter: return "FrozenParameter";
    case ErrorCode::kEmptyTrainableSet: return "EmptyTrainableSet";
    case ErrorCode::kNonDeterministicLoss: return "NonDeterministicLoss";
    case ErrorCode::kEmptyWaveform: return "EmptyWaveform";
    case ErrorCode::kInsufficientData: return "InsufficientData";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kAlreadyFiltered: return "AlreadyFiltered";
    case ErrorCode::kSingleLayerGrid: return "SingleLayerGrid";
    case ErrorCode::kUnknownToken: return "UnknownToken";
    case ErrorCode::kTargetUnreachable: return "TargetUnreachable";
    case ErrorCode::kCountExceedsVocab: return "CountExceedsVocab";
    case ErrorCode::kEmptyText: return "EmptyText";
    case ErrorCode::kContextOverflow: return "ContextOverflow";
    case ErrorCode::kNoAudioPositions: return "NoAudioPositions";
    case ErrorCode::kNoTrainableParams: return "NoTrainableParams";
    case ErrorCode::kUnknownTarget: return "UnknownTarget";
    case ErrorCode::kMissingHead: return "MissingHead";
    case ErrorCode::kEmptySplit: return "EmptySplit";
    case ErrorCode::kHeterogeneousHeads: return "HeterogeneousHeads";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kLabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::kSchemaError: return "SchemaError";
    case ErrorCode::kUnknownLabel: return "UnknownLabel";
    case ErrorCode::kInvalidSpec: return "InvalidSpec";
    case ErrorCode::kEmptyCorpus: return "EmptyCorpus";
    case ErrorCode::kMissingPrerequisite: return "MissingPrerequisite";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kFormatError: return "FormatError";
    case ErrorCode::kNumericalFailure: return "NumericalFailure";
  }
  return "Unknown";
}

}  // namespace sptok
