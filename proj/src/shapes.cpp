#include "cadnerf/shapes.hpp"

#include <cmath>
#include <map>
#include <numbers>

#include "cadnerf/errors.hpp"

namespace cadnerf::shapes {

using Eigen::Vector3d;

namespace {

TriangleMesh finish(TriangleMesh mesh) {
  mesh = normalize_mesh(std::move(mesh));
  mesh.watertight = check_watertight(mesh);
  return mesh;
}

TriangleMesh raw_box(const Vector3d& lo, const Vector3d& hi) {
  TriangleMesh m;
  for (int i = 0; i < 8; ++i) {
    m.vertices.emplace_back(i & 1 ? hi.x() : lo.x(), i & 2 ? hi.y() : lo.y(), i & 4 ? hi.z() : lo.z());
  }
  // outward counter-clockwise quads
  const int quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4}, {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  for (const auto& q : quads) {
    m.triangles.push_back({q[0], q[1], q[2]});
    m.triangles.push_back({q[0], q[2], q[3]});
  }
  return m;
}

TriangleMesh raw_frustum(int segments, double r0, double r1, double z0, double z1, const Vector3d& offset) {
  TriangleMesh m;
  for (int i = 0; i < segments; ++i) {
    const double a = 2.0 * std::numbers::pi * i / segments;
    m.vertices.push_back(offset + Vector3d(r0 * std::cos(a), r0 * std::sin(a), z0));
    m.vertices.push_back(offset + Vector3d(r1 * std::cos(a), r1 * std::sin(a), z1));
  }
  const int bottom = static_cast<int>(m.vertices.size());
  m.vertices.push_back(offset + Vector3d(0, 0, z0));
  const int top = bottom + 1;
  m.vertices.push_back(offset + Vector3d(0, 0, z1));
  for (int i = 0; i < segments; ++i) {
    const int j = (i + 1) % segments;
    const int b0 = 2 * i, t0 = 2 * i + 1, b1 = 2 * j, t1 = 2 * j + 1;
    m.triangles.push_back({b0, b1, t1});
    m.triangles.push_back({b0, t1, t0});
    m.triangles.push_back({bottom, b1, b0});
    m.triangles.push_back({top, t0, t1});
  }
  return m;
}

}  // namespace

TriangleMesh merge(const std::vector<TriangleMesh>& parts) {
  TriangleMesh out;
  for (const auto& p : parts) {
    const int base = static_cast<int>(out.vertices.size());
    out.vertices.insert(out.vertices.end(), p.vertices.begin(), p.vertices.end());
    for (const auto& t : p.triangles) out.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
  }
  out.watertight = check_watertight(out);
  return out;
}

TriangleMesh transformed(TriangleMesh mesh, const Vector3d& scale, const Vector3d& offset) {
  for (auto& v : mesh.vertices) v = v.cwiseProduct(scale) + offset;
  return mesh;
}

TriangleMesh cuboid(double sx, double sy, double sz) {
  const Vector3d half(sx / 2, sy / 2, sz / 2);
  return finish(raw_box(-half, half));
}

TriangleMesh icosphere(int subdivisions) {
  const double p = (1.0 + std::sqrt(5.0)) / 2.0;
  TriangleMesh m;
  m.vertices = {{-1, p, 0}, {1, p, 0}, {-1, -p, 0}, {1, -p, 0}, {0, -1, p}, {0, 1, p},
                {0, -1, -p}, {0, 1, -p}, {p, 0, -1}, {p, 0, 1}, {-p, 0, -1}, {-p, 0, 1}};
  for (auto& v : m.vertices) v.normalize();
  m.triangles = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                 {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                 {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      if (auto it = midpoint.find(key); it != midpoint.end()) return it->second;
      m.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
      const int idx = static_cast<int>(m.vertices.size()) - 1;
      midpoint[key] = idx;
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    for (const auto& t : m.triangles) {
      const int ab = mid(t[0], t[1]), bc = mid(t[1], t[2]), ca = mid(t[2], t[0]);
      next.push_back({t[0], ab, ca});
      next.push_back({t[1], bc, ab});
      next.push_back({t[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    m.triangles = std::move(next);
  }
  return finish(std::move(m));
}

TriangleMesh frustum(int segments, double bottom_radius, double top_radius, double height) {
  return finish(raw_frustum(segments, bottom_radius, top_radius, -height / 2, height / 2, Vector3d::Zero()));
}

TriangleMesh cylinder(int segments, double height_over_diameter) {
  return frustum(segments, 0.5, 0.5, height_over_diameter);
}

TriangleMesh torus(double major_radius, double minor_radius, int major_segments, int minor_segments) {
  if (minor_radius >= major_radius) fail(ErrorKind::InvalidInput, "torus minor radius must be below major radius");
  TriangleMesh m;
  for (int i = 0; i < major_segments; ++i) {
    const double theta = 2.0 * std::numbers::pi * i / major_segments;
    for (int j = 0; j < minor_segments; ++j) {
      const double phi = 2.0 * std::numbers::pi * j / minor_segments;
      const double rho = major_radius + minor_radius * std::cos(phi);
      m.vertices.emplace_back(rho * std::cos(theta), rho * std::sin(theta), minor_radius * std::sin(phi));
    }
  }
  auto idx = [&](int i, int j) { return (i % major_segments) * minor_segments + (j % minor_segments); };
  for (int i = 0; i < major_segments; ++i) {
    for (int j = 0; j < minor_segments; ++j) {
      const int a = idx(i, j), b = idx(i + 1, j), c = idx(i + 1, j + 1), d = idx(i, j + 1);
      m.triangles.push_back({a, b, c});
      m.triangles.push_back({a, c, d});
    }
  }
  return finish(std::move(m));
}

TriangleMesh lamp() {
  auto base = raw_box({-0.3, -0.3, -0.5}, {0.3, 0.3, -0.42});
  auto pole = raw_box({-0.03, -0.03, -0.41}, {0.03, 0.03, 0.25});
  auto shade = raw_frustum(24, 0.22, 0.1, 0.26, 0.45, Vector3d(0.15, 0.0, 0.0));
  return finish(merge({base, pole, shade}));
}

std::vector<std::string> basic_shape_names() { return {"cuboid", "sphere", "cylinder", "torus", "lamp"}; }

TriangleMesh by_name(const std::string& name) {
  if (name == "cuboid") return cuboid(1.0, 0.7, 0.5);
  if (name == "cube") return cuboid();
  if (name == "sphere") return icosphere(3);
  if (name == "cylinder") return cylinder(32, 1.0);
  if (name == "torus") return torus();
  if (name == "lamp") return lamp();
  fail(ErrorKind::InvalidInput, "unknown basic shape '" + name + "'");
}

}  // namespace cadnerf::shapes
