#include "propfield/error.hpp"

namespace propfield {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::MissingManifest: return "missing-manifest";
    case ErrorKind::DimensionMismatch: return "dimension-mismatch";
    case ErrorKind::NonOrthonormalRotation: return "non-orthonormal-rotation";
    case ErrorKind::UnreadableFile: return "unreadable-file";
    case ErrorKind::DegeneratePose: return "degenerate-pose";
    case ErrorKind::EmptyScene: return "empty-scene";
    case ErrorKind::EmptyFusion: return "empty-fusion";
    case ErrorKind::EmptyInput: return "empty-input";
    case ErrorKind::Provider: return "provider";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::CountMismatch: return "count-mismatch";
    case ErrorKind::UnparseableResponse: return "unparseable-response";
    case ErrorKind::MissingThickness: return "missing-thickness";
    case ErrorKind::MissingArtifact: return "missing-artifact";
    case ErrorKind::Config: return "config";
  }
  return "unknown";
}

}  // namespace propfield
