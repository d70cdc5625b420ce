#include "pdac/error.hpp"

namespace pdac {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::MalformedHeader: return "MalformedHeader";
    case ErrorKind::NonThreeDimensional: return "NonThreeDimensional";
    case ErrorKind::WriteFailure: return "WriteFailure";
    case ErrorKind::DuplicatePath: return "DuplicatePath";
    case ErrorKind::UnknownLabel: return "UnknownLabel";
    case ErrorKind::MissingFileReferenced: return "MissingFileReferenced";
    case ErrorKind::DegenerateOutput: return "DegenerateOutput";
    case ErrorKind::AlreadyNormalized: return "AlreadyNormalized";
    case ErrorKind::EmptyMask: return "EmptyMask";
    case ErrorKind::NonCubeInput: return "NonCubeInput";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::EmptyBatch: return "EmptyBatch";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::NoCheckpoints: return "NoCheckpoints";
    case ErrorKind::BadCheckpoint: return "BadCheckpoint";
    case ErrorKind::EmptyMaskResult: return "EmptyMaskResult";
    case ErrorKind::OffsetOutOfBounds: return "OffsetOutOfBounds";
    case ErrorKind::SolverDiverged: return "SolverDiverged";
    case ErrorKind::InsufficientSamples: return "InsufficientSamples";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonConvergentSqrt: return "NonConvergentSqrt";
    case ErrorKind::TooSmallForScales: return "TooSmallForScales";
    case ErrorKind::InvalidEdge: return "InvalidEdge";
    case ErrorKind::SingleClassDataset: return "SingleClassDataset";
    case ErrorKind::SingleClassScores: return "SingleClassScores";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
  }
  return "Unknown";
}

}  // namespace pdac
