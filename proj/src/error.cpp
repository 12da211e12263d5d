#include "dhg/error.hpp"

namespace dhg {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kInvalidAxis: return "InvalidAxis";
    case ErrorCode::kLabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::kNoTape: return "NoTape";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kDimMismatch: return "DimMismatch";
    case ErrorCode::kNonFiniteData: return "NonFiniteData";
    case ErrorCode::kTreeMismatch: return "TreeMismatch";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kIsolatedNode: return "IsolatedNode";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kNoBranchEnabled: return "NoBranchEnabled";
    case ErrorCode::kDatasetError: return "DatasetError";
    case ErrorCode::kDivergedLoss: return "DivergedLoss";
    case ErrorCode::kCheckpointMismatch: return "CheckpointMismatch";
  }
  return "Unknown";
}

}  // namespace dhg
