#include "patchood/error.hpp"

namespace patchood {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::ShapeDataMismatch: return "ShapeDataMismatch";
    case ErrorCode::UnsupportedDtype: return "UnsupportedDtype";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::GeometryError: return "GeometryError";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::FactorizationFailure: return "FactorizationFailure";
    case ErrorCode::PatchLargerThanImage: return "PatchLargerThanImage";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::UncoveredVoxel: return "UncoveredVoxel";
    case ErrorCode::DegenerateRange: return "DegenerateRange";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::MissingDice: return "MissingDice";
    case ErrorCode::MissingScores: return "MissingScores";
  }
  return "Unknown";
}

}  // namespace patchood
