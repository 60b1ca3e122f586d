#include "cadnerf/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include "cadnerf/errors.hpp"

namespace cadnerf {

using Eigen::Vector3d;

namespace {
constexpr double kDetEpsilon = 1e-9;
constexpr double kRayEpsilon = 1e-9;
}  // namespace

bool check_watertight(const TriangleMesh& mesh) {
  if (mesh.triangles.empty()) return false;
  // directed edge -> use count
  std::map<std::pair<int, int>, int> directed;
  for (const auto& t : mesh.triangles) {
    for (int k = 0; k < 3; ++k) {
      const int a = t[k], b = t[(k + 1) % 3];
      if (a == b) return false;
      if (++directed[{a, b}] > 1) return false;
    }
  }
  for (const auto& [edge, uses] : directed) {
    if (!directed.contains({edge.second, edge.first})) return false;
  }
  return true;
}

TriangleMesh normalize_mesh(TriangleMesh mesh) {
  if (mesh.vertices.empty()) fail(ErrorKind::InvalidInput, "mesh has no vertices");
  Vector3d lo = mesh.vertices.front(), hi = mesh.vertices.front();
  for (const auto& v : mesh.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const double extent = (hi - lo).maxCoeff();
  if (!(extent > 0.0)) fail(ErrorKind::InvalidInput, "mesh is degenerate (zero extent)");
  const Vector3d center = 0.5 * (lo + hi);
  for (auto& v : mesh.vertices) v = (v - center) / extent;
  return mesh;
}

TriangleMesh parse_obj(std::istream& in, const std::string& source_name) {
  TriangleMesh mesh;
  std::string line;
  int line_no = 0;
  auto format_error = [&](const std::string& why) {
    fail(ErrorKind::Format, source_name + ":" + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) format_error("vertex needs three coordinates");
      if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z)) format_error("non-finite vertex");
      mesh.vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<int> poly;
      std::string tok;
      while (ls >> tok) {
        // accept "i", "i/t", "i/t/n", "i//n"
        const auto slash = tok.find('/');
        const std::string head = tok.substr(0, slash);
        int idx = 0;
        try {
          std::size_t used = 0;
          idx = std::stoi(head, &used);
          if (used != head.size()) format_error("bad face index '" + tok + "'");
        } catch (const std::logic_error&) {
          format_error("bad face index '" + tok + "'");
        }
        if (idx < 0) idx = static_cast<int>(mesh.vertices.size()) + idx + 1;
        if (idx < 1 || idx > static_cast<int>(mesh.vertices.size())) format_error("face index out of range");
        poly.push_back(idx - 1);
      }
      if (poly.size() < 3) format_error("face needs at least three vertices");
      for (std::size_t k = 1; k + 1 < poly.size(); ++k) mesh.triangles.push_back({poly[0], poly[k], poly[k + 1]});
    }
    // other records (vn, vt, usemtl, o, g, s, ...) are ignored
  }
  if (mesh.vertices.empty() || mesh.triangles.empty()) {
    fail(ErrorKind::InvalidInput, source_name + ": empty mesh");
  }
  mesh.watertight = check_watertight(mesh);
  return mesh;
}

TriangleMesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  TriangleMesh mesh = normalize_mesh(parse_obj(in, path.string()));
  mesh.watertight = check_watertight(mesh);
  return mesh;
}

void save_obj(const std::filesystem::path& path, const TriangleMesh& mesh) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << std::setprecision(17);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

std::optional<double> intersect_triangle(const Vector3d& origin, const Vector3d& direction, const Vector3d& a,
                                         const Vector3d& b, const Vector3d& c) {
  const Vector3d e1 = b - a;
  const Vector3d e2 = c - a;
  const Vector3d p = direction.cross(e2);
  const double det = e1.dot(p);
  if (std::abs(det) < kDetEpsilon) return std::nullopt;
  const double inv = 1.0 / det;
  const Vector3d s = origin - a;
  const double u = s.dot(p) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vector3d q = s.cross(e1);
  const double v = direction.dot(q) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  return e2.dot(q) * inv;
}

IntersectionCount ray_intersections(const TriangleMesh& mesh, const Vector3d& origin, const Vector3d& direction) {
  std::vector<double> hits;
  for (const auto& t : mesh.triangles) {
    const auto hit = intersect_triangle(origin, direction, mesh.vertices[t[0]], mesh.vertices[t[1]],
                                        mesh.vertices[t[2]]);
    if (hit && *hit > kRayEpsilon) hits.push_back(*hit);
  }
  std::sort(hits.begin(), hits.end());
  int count = 0;
  double last = -std::numeric_limits<double>::infinity();
  for (double t : hits) {
    if (t - last > kRayEpsilon * std::max(1.0, std::abs(t))) ++count;
    last = t;
  }
  return {count, mesh.watertight};
}

std::vector<Vector3d> parity_directions(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<Vector3d> dirs;
  while (static_cast<int>(dirs.size()) < count) {
    Vector3d d(normal(rng), normal(rng), normal(rng));
    if (d.norm() < 1e-3) continue;
    dirs.push_back(d.normalized());
  }
  return dirs;
}

namespace {

// Closest point on triangle (Ericson, Real-Time Collision Detection 5.1.5).
Vector3d closest_on_triangle(const Vector3d& p, const Vector3d& a, const Vector3d& b, const Vector3d& c) {
  const Vector3d ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vector3d bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + d1 / (d1 - d3) * ab;
  const Vector3d cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + d2 / (d2 - d6) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) return b + (d4 - d3) / ((d4 - d3) + (d5 - d6)) * (c - b);
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

}  // namespace

double distance_to_surface(const TriangleMesh& mesh, const Vector3d& point) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& t : mesh.triangles) {
    const Vector3d q = closest_on_triangle(point, mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
    best = std::min(best, (q - point).squaredNorm());
  }
  return std::sqrt(best);
}

int occupancy(const TriangleMesh& mesh, const OccupancyQuery& query, double surface_tolerance) {
  if (query.directions.empty()) fail(ErrorKind::InvalidInput, "occupancy query needs at least one direction");
  if (surface_tolerance > 0.0 && distance_to_surface(mesh, query.point) < surface_tolerance) {
    fail(ErrorKind::SurfaceAmbiguous, "point lies within the surface tolerance band");
  }
  int odd = 0;
  for (const auto& d : query.directions) {
    if (ray_intersections(mesh, query.point, d).count % 2 == 1) ++odd;
  }
  return 2 * odd > static_cast<int>(query.directions.size()) ? 1 : 0;
}

SilhouetteResult render_silhouette(const TriangleMesh& mesh, const CameraPose& pose) {
  SilhouetteResult result{MaskRaster(pose.width, pose.height), false};
  const Eigen::Matrix3d world_to_cam = pose.rotation.transpose();
  for (const auto& tri : mesh.triangles) {
    const Vector3d& a = mesh.vertices[tri[0]];
    const Vector3d& b = mesh.vertices[tri[1]];
    const Vector3d& c = mesh.vertices[tri[2]];
    // Candidate pixels: bounding box of the projection when the triangle is
    // entirely in front of the camera; whole image otherwise.
    int x0 = 0, y0 = 0, x1 = pose.width - 1, y1 = pose.height - 1;
    bool in_front = true;
    double umin = 1e300, umax = -1e300, vmin = 1e300, vmax = -1e300;
    for (const Vector3d* v : {&a, &b, &c}) {
      const Vector3d local = world_to_cam * (*v - pose.center);
      const double depth = -local.z();
      if (depth <= 1e-6) {
        in_front = false;
        break;
      }
      const double u = pose.principal.x() + pose.focal * local.x() / depth;
      const double vv = pose.principal.y() - pose.focal * local.y() / depth;
      umin = std::min(umin, u);
      umax = std::max(umax, u);
      vmin = std::min(vmin, vv);
      vmax = std::max(vmax, vv);
    }
    if (in_front) {
      if (umax < -1.0 || vmax < -1.0 || umin > pose.width + 1.0 || vmin > pose.height + 1.0) continue;
      x0 = std::max(0, static_cast<int>(std::floor(umin - 0.5)) - 1);
      y0 = std::max(0, static_cast<int>(std::floor(vmin - 0.5)) - 1);
      x1 = std::min(pose.width - 1, static_cast<int>(std::ceil(umax - 0.5)) + 1);
      y1 = std::min(pose.height - 1, static_cast<int>(std::ceil(vmax - 0.5)) + 1);
    }
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (result.mask.at(x, y)) continue;
        const Vector3d d = camera_ray_direction(pose, Eigen::Vector2d(x + 0.5, y + 0.5));
        const auto hit = intersect_triangle(pose.center, d, a, b, c);
        if (hit && *hit > kRayEpsilon) result.mask.at(x, y) = 1;
      }
    }
  }
  result.empty = result.mask.count() == 0;
  return result;
}

std::optional<std::pair<double, int>> nearest_hit(const TriangleMesh& mesh, const Vector3d& origin,
                                                  const Vector3d& direction) {
  std::optional<std::pair<double, int>> best;
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto& t = mesh.triangles[i];
    const auto hit = intersect_triangle(origin, direction, mesh.vertices[t[0]], mesh.vertices[t[1]],
                                        mesh.vertices[t[2]]);
    if (hit && *hit > kRayEpsilon && (!best || *hit < best->first)) best = {{*hit, static_cast<int>(i)}};
  }
  return best;
}

std::vector<Vector3d> sample_surface(const TriangleMesh& mesh, std::size_t count, std::uint64_t seed) {
  std::vector<double> cumulative;
  double total = 0.0;
  for (const auto& t : mesh.triangles) {
    const Vector3d& a = mesh.vertices[t[0]];
    total += 0.5 * (mesh.vertices[t[1]] - a).cross(mesh.vertices[t[2]] - a).norm();
    cumulative.push_back(total);
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<Vector3d> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double pick = uni(rng) * total;
    const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), pick);
    const auto& t = mesh.triangles[std::min<std::size_t>(it - cumulative.begin(), mesh.triangles.size() - 1)];
    double r1 = uni(rng), r2 = uni(rng);
    if (r1 + r2 > 1.0) {
      r1 = 1.0 - r1;
      r2 = 1.0 - r2;
    }
    const Vector3d& a = mesh.vertices[t[0]];
    out.push_back(a + r1 * (mesh.vertices[t[1]] - a) + r2 * (mesh.vertices[t[2]] - a));
  }
  return out;
}

}  // namespace cadnerf
