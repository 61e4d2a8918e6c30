#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace patchood {

/// Classification of every failure the engine reports.
enum class ErrorCode {
  MalformedHeader,
  ShapeDataMismatch,
  UnsupportedDtype,
  IoFailure,
  InvalidArgument,
  SchemaError,
  MissingFile,
  GeometryError,
  NonFiniteInput,
  DimensionMismatch,
  TooFewSamples,
  FactorizationFailure,
  PatchLargerThanImage,
  LengthMismatch,
  UncoveredVoxel,
  DegenerateRange,
  NotNormalized,
  ShapeMismatch,
  EmptyInput,
  MissingDice,
  MissingScores,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace patchood
