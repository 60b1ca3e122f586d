#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cadnerf/camera.hpp"
#include "cadnerf/image.hpp"

namespace cadnerf {

/// Indexed triangle mesh. Meshes returned by `load_mesh` are normalized:
/// bounding box centered at the origin, largest extent equal to 1.
struct TriangleMesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 3>> triangles;
  bool watertight = false;
};

/// Every edge used by exactly two triangles, traversed in opposite directions.
bool check_watertight(const TriangleMesh& mesh);

/// Recenters the bounding box on the origin and scales the largest extent to 1.
TriangleMesh normalize_mesh(TriangleMesh mesh);

/// Parses the OBJ subset (`v`, `f`; polygons fan-triangulated). Does not normalize.
TriangleMesh parse_obj(std::istream& in, const std::string& source_name = "<stream>");
TriangleMesh load_mesh(const std::filesystem::path& path);
void save_obj(const std::filesystem::path& path, const TriangleMesh& mesh);

/// Möller–Trumbore test; returns the ray parameter of the hit if any.
std::optional<double> intersect_triangle(const Eigen::Vector3d& origin, const Eigen::Vector3d& direction,
                                         const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                                         const Eigen::Vector3d& c);

struct IntersectionCount {
  int count = 0;
  bool mesh_watertight = true;  // false flags a parity count on an open mesh
};

/// Distinct surface crossings with t > 1e-9. Hits closer than 1e-9 in t
/// (a ray through a shared edge or vertex) are merged into one.
IntersectionCount ray_intersections(const TriangleMesh& mesh, const Eigen::Vector3d& origin,
                                    const Eigen::Vector3d& direction);

struct OccupancyQuery {
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  std::vector<Eigen::Vector3d> directions;
};

/// Seeded pseudo-random unit directions for parity voting.
std::vector<Eigen::Vector3d> parity_directions(int count, std::uint64_t seed = 0x5eedULL);

double distance_to_surface(const TriangleMesh& mesh, const Eigen::Vector3d& point);

/// 1 if the majority of per-direction parities is odd. Throws
/// SurfaceAmbiguous when the point lies within `surface_tolerance` of the mesh.
int occupancy(const TriangleMesh& mesh, const OccupancyQuery& query, double surface_tolerance = 1e-6);

struct SilhouetteResult {
  MaskRaster mask;
  bool empty = false;  // warning: nothing of the mesh is visible
};

/// Foreground iff the camera ray through the pixel center hits the mesh.
/// The pose's own width/height are used for the raster.
SilhouetteResult render_silhouette(const TriangleMesh& mesh, const CameraPose& pose);

/// Nearest hit along a ray; returns (t, triangle index).
std::optional<std::pair<double, int>> nearest_hit(const TriangleMesh& mesh, const Eigen::Vector3d& origin,
                                                  const Eigen::Vector3d& direction);

/// Area-weighted random surface samples.
std::vector<Eigen::Vector3d> sample_surface(const TriangleMesh& mesh, std::size_t count, std::uint64_t seed);

}  // namespace cadnerf
