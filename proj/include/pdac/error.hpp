#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pdac {

/// Failure categories raised across the toolkit. Each maps to one named
/// error condition of a module contract.
enum class ErrorKind {
  // volio
  MissingFile,
  MalformedHeader,
  NonThreeDimensional,
  WriteFailure,
  DuplicatePath,
  UnknownLabel,
  MissingFileReferenced,
  // preprocess
  DegenerateOutput,
  AlreadyNormalized,
  EmptyMask,
  NonCubeInput,
  // networks
  InvalidConfig,
  ShapeMismatch,
  // gantrain
  EmptyBatch,
  EmptyDataset,
  NoCheckpoints,
  BadCheckpoint,
  // blend
  EmptyMaskResult,
  OffsetOutOfBounds,
  SolverDiverged,
  InsufficientSamples,
  // quality
  DimensionMismatch,
  NonConvergentSqrt,
  TooSmallForScales,
  InvalidEdge,
  // classifier
  SingleClassDataset,
  SingleClassScores,
  // cli
  ConfigInvalid,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace pdac
