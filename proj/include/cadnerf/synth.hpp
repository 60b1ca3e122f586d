#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "cadnerf/camera.hpp"
#include "cadnerf/image.hpp"
#include "cadnerf/mesh.hpp"

namespace cadnerf {

/// A mesh with one RGB color per triangle.
struct ColoredMesh {
  TriangleMesh mesh;
  std::vector<Eigen::Vector3d> face_colors;
};

/// Colors each triangle by the signed axis its normal points along most:
/// +x, -x, +y, -y, +z, -z map to palette entries 0..5.
ColoredMesh paint_by_normal(const TriangleMesh& mesh, const std::vector<Eigen::Vector3d>& palette);
std::vector<Eigen::Vector3d> default_palette();

struct SyntheticView {
  RgbImage image;
  MaskRaster mask;  // pixels where the object (not the backdrop) is the first hit
};

/// Ray-casts pixel centers. Missed pixels are black; the optional backdrop is
/// rendered but excluded from the mask.
SyntheticView render_synthetic(const ColoredMesh& object, const CameraPose& pose,
                               const std::optional<ColoredMesh>& backdrop = std::nullopt);

}  // namespace cadnerf
