#include "cadnerf/errors.hpp"

namespace cadnerf {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid-input";
    case ErrorKind::Format: return "format";
    case ErrorKind::SurfaceAmbiguous: return "surface-ambiguous";
    case ErrorKind::EmptySilhouette: return "empty-silhouette";
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::CorruptLibrary: return "corrupt-library";
    case ErrorKind::Infeasible: return "infeasible";
    case ErrorKind::TooManyDiscards: return "too-many-discards";
    case ErrorKind::AlignmentIllConditioned: return "alignment-ill-conditioned";
    case ErrorKind::ImageTooSmall: return "image-too-small";
    case ErrorKind::DoubleBackward: return "double-backward";
    case ErrorKind::Optimizer: return "optimizer";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

}  // namespace cadnerf
