#include "cadnerf/synth.hpp"

#include "cadnerf/errors.hpp"

namespace cadnerf {

std::vector<Eigen::Vector3d> default_palette() {
  return {{0.90, 0.15, 0.15}, {0.15, 0.75, 0.20}, {0.20, 0.30, 0.90},
          {0.95, 0.80, 0.10}, {0.85, 0.25, 0.80}, {0.10, 0.80, 0.85}};
}

ColoredMesh paint_by_normal(const TriangleMesh& mesh, const std::vector<Eigen::Vector3d>& palette) {
  if (palette.size() < 6) fail(ErrorKind::InvalidInput, "palette needs six colors");
  ColoredMesh out{mesh, {}};
  out.face_colors.reserve(mesh.triangles.size());
  for (const auto& tri : mesh.triangles) {
    const Eigen::Vector3d n =
        (mesh.vertices[tri[1]] - mesh.vertices[tri[0]]).cross(mesh.vertices[tri[2]] - mesh.vertices[tri[0]]);
    int axis = 0;
    n.cwiseAbs().maxCoeff(&axis);
    out.face_colors.push_back(palette[static_cast<std::size_t>(2 * axis + (n(axis) < 0 ? 1 : 0))]);
  }
  return out;
}

SyntheticView render_synthetic(const ColoredMesh& object, const CameraPose& pose,
                               const std::optional<ColoredMesh>& backdrop) {
  if (object.face_colors.size() != object.mesh.triangles.size()) {
    fail(ErrorKind::InvalidInput, "one color per triangle is required");
  }
  SyntheticView view;
  view.image.width = view.mask.width = pose.width;
  view.image.height = view.mask.height = pose.height;
  view.image.data.assign(static_cast<std::size_t>(pose.width) * pose.height * 3, 0.0);
  view.mask.pixels.assign(static_cast<std::size_t>(pose.width) * pose.height, 0);
  for (int row = 0; row < pose.height; ++row) {
    for (int col = 0; col < pose.width; ++col) {
      const Eigen::Vector3d dir = camera_ray_direction(pose, {col + 0.5, row + 0.5});
      const auto hit = nearest_hit(object.mesh, pose.center, dir);
      std::optional<std::pair<double, int>> back;
      if (backdrop) back = nearest_hit(backdrop->mesh, pose.center, dir);
      const std::size_t p = static_cast<std::size_t>(row) * pose.width + col;
      Eigen::Vector3d color = Eigen::Vector3d::Zero();
      if (hit && (!back || hit->first <= back->first)) {
        color = object.face_colors[static_cast<std::size_t>(hit->second)];
        view.mask.pixels[p] = 1;
      } else if (back) {
        color = backdrop->face_colors[static_cast<std::size_t>(back->second)];
      }
      for (int c = 0; c < 3; ++c) view.image.data[p * 3 + c] = color(c);
    }
  }
  return view;
}

}  // namespace cadnerf
