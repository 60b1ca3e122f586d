#pragma once

#include <string>
#include <vector>

#include "cadnerf/mesh.hpp"

namespace cadnerf::shapes {

// Parametric watertight meshes. All results are normalized (largest extent 1)
// and carry a computed watertight flag.

TriangleMesh cuboid(double sx = 1.0, double sy = 1.0, double sz = 1.0);
TriangleMesh icosphere(int subdivisions = 3);
TriangleMesh cylinder(int segments = 32, double height_over_diameter = 1.0);
/// Truncated cone along z; radii relative to the bottom radius.
TriangleMesh frustum(int segments, double bottom_radius, double top_radius, double height);
TriangleMesh torus(double major_radius = 0.35, double minor_radius = 0.15, int major_segments = 32,
                   int minor_segments = 16);
/// Base plate, thin pole and an off-axis shade as three disjoint closed shells.
TriangleMesh lamp();

/// Builds a named basic shape: cuboid, sphere, cylinder, torus, lamp.
TriangleMesh by_name(const std::string& name);
std::vector<std::string> basic_shape_names();

/// Concatenates meshes (no welding).
TriangleMesh merge(const std::vector<TriangleMesh>& parts);
/// Translates and scales a mesh without renormalizing.
TriangleMesh transformed(TriangleMesh mesh, const Eigen::Vector3d& scale, const Eigen::Vector3d& offset);

}  // namespace cadnerf::shapes
