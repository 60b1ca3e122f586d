#include "cadnerf/camera.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <Eigen/SVD>
#include <json.hpp>

#include "cadnerf/errors.hpp"

namespace cadnerf {

using Eigen::Matrix3d;
using Eigen::Matrix4d;
using Eigen::Vector2d;
using Eigen::Vector3d;

Matrix4d CameraPose::camera_to_world() const {
  Matrix4d m = Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = center;
  return m;
}

void CameraPose::set_camera_to_world(const Matrix4d& m) {
  rotation = m.topLeftCorner<3, 3>();
  center = m.topRightCorner<3, 1>();
}

Matrix3d skew(const Vector3d& v) {
  Matrix3d k;
  k << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return k;
}

Matrix3d so3_exp(const Vector3d& w) {
  const double theta2 = w.squaredNorm();
  const Matrix3d k = skew(w);
  double a, b;
  if (theta2 < 1e-8) {
    a = 1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0;
    b = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0;
  } else {
    const double theta = std::sqrt(theta2);
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  return Matrix3d::Identity() + a * k + b * k * k;
}

Vector3d so3_log(const Matrix3d& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

double rotation_angle_between(const Matrix3d& a, const Matrix3d& b) {
  const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

double library_focal(int resolution, double radius) {
  const double bounding = std::sqrt(3.0) / 2.0;
  const double half_angle = std::asin(std::min(bounding / radius, 0.999));
  return 0.4 * resolution / std::tan(half_angle);
}

CameraPose look_at(const Vector3d& center, const Vector3d& target, double focal, int width, int height) {
  const Vector3d forward = (target - center).normalized();
  Vector3d up = Vector3d::UnitZ();
  if (forward.cross(up).norm() < 1e-9) up = Vector3d::UnitX();
  const Vector3d right = forward.cross(up).normalized();
  const Vector3d true_up = right.cross(forward);
  CameraPose pose;
  pose.rotation.col(0) = right;
  pose.rotation.col(1) = true_up;
  pose.rotation.col(2) = -forward;
  pose.center = center;
  pose.focal = focal;
  pose.width = width;
  pose.height = height;
  pose.principal = Vector2d(width / 2.0, height / 2.0);
  return pose;
}

std::pair<double, double> azimuth_elevation(const Vector3d& c) {
  const double az = std::atan2(c.y(), c.x());
  const double el = std::atan2(c.z(), std::hypot(c.x(), c.y()));
  return {az, el};
}

std::vector<CameraPose> sample_library_poses(int count, double radius, int resolution) {
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  const double focal = library_focal(resolution, radius);
  std::vector<CameraPose> poses;
  poses.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / count;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i;
    const Vector3d c = radius * Vector3d(r * std::cos(phi), r * std::sin(phi), z);
    poses.push_back(look_at(c, Vector3d::Zero(), focal, resolution, resolution));
  }
  std::stable_sort(poses.begin(), poses.end(), [](const CameraPose& a, const CameraPose& b) {
    return azimuth_elevation(a.center) < azimuth_elevation(b.center);
  });
  return poses;
}

Vector3d camera_ray_direction(const CameraPose& pose, const Vector2d& pixel) {
  const Vector3d local((pixel.x() - pose.principal.x()) / pose.focal,
                       -(pixel.y() - pose.principal.y()) / pose.focal, -1.0);
  return (pose.rotation * local).normalized();
}

Ray generate_ray(const CameraPose& pose, const Vector2d& pixel, RayBounds bounds) {
  return Ray{pose.center, camera_ray_direction(pose, pixel), bounds.t_near, bounds.t_far};
}

std::vector<Ray> generate_rays(const CameraPose& pose, std::span<const Vector2d> pixels, RayBounds bounds) {
  std::vector<Ray> rays;
  rays.reserve(pixels.size());
  for (const auto& p : pixels) rays.push_back(generate_ray(pose, p, bounds));
  return rays;
}

CameraPose apply_pose_update(const PoseUpdate& update, const CameraPose& init) {
  Matrix4d t = Matrix4d::Identity();
  t.topLeftCorner<3, 3>() = so3_exp(update.axis_angle);
  t.topRightCorner<3, 1>() = update.delta_t;
  CameraPose out = init;
  out.set_camera_to_world(t * init.camera_to_world());
  return out;
}

CameraPose Similarity::apply(const CameraPose& pose) const {
  CameraPose out = pose;
  out.rotation = rotation * pose.rotation;
  out.center = apply(pose.center);
  return out;
}

Similarity fit_similarity(std::span<const Vector3d> from, std::span<const Vector3d> to) {
  if (from.size() != to.size() || from.size() < 2) {
    fail(ErrorKind::InvalidInput, "similarity fit needs two equal-length point sets of size >= 2");
  }
  const double n = static_cast<double>(from.size());
  Vector3d mu_from = Vector3d::Zero(), mu_to = Vector3d::Zero();
  for (std::size_t i = 0; i < from.size(); ++i) {
    mu_from += from[i];
    mu_to += to[i];
  }
  mu_from /= n;
  mu_to /= n;
  Matrix3d cov = Matrix3d::Zero();
  double var_from = 0.0;
  for (std::size_t i = 0; i < from.size(); ++i) {
    cov += (to[i] - mu_to) * (from[i] - mu_from).transpose();
    var_from += (from[i] - mu_from).squaredNorm();
  }
  cov /= n;
  var_from /= n;
  Eigen::JacobiSVD<Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto sv = svd.singularValues();
  if (var_from <= 0.0 || sv(1) <= 1e-9 * std::max(sv(0), 1e-300)) {
    fail(ErrorKind::AlignmentIllConditioned, "camera centers are collinear; alignment is ill-conditioned");
  }
  Matrix3d s = Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) s(2, 2) = -1.0;
  Similarity sim;
  sim.rotation = svd.matrixU() * s * svd.matrixV().transpose();
  sim.scale = (sv.asDiagonal() * s).trace() / var_from;
  sim.translation = mu_to - sim.scale * sim.rotation * mu_from;
  return sim;
}

PoseErrors pose_registration_error(std::span<const CameraPose> estimated, std::span<const CameraPose> reference) {
  if (estimated.size() != reference.size() || estimated.size() < 2) {
    fail(ErrorKind::InvalidInput, "pose lists must have equal length >= 2");
  }
  std::vector<Vector3d> from, to;
  for (std::size_t i = 0; i < estimated.size(); ++i) {
    from.push_back(estimated[i].center);
    to.push_back(reference[i].center);
  }
  const Similarity sim = fit_similarity(from, to);
  PoseErrors err;
  for (std::size_t i = 0; i < estimated.size(); ++i) {
    const CameraPose aligned = sim.apply(estimated[i]);
    err.rotation_deg += rotation_angle_between(aligned.rotation, reference[i].rotation) * 180.0 / std::numbers::pi;
    err.translation_x100 += (aligned.center - reference[i].center).norm() * 100.0;
  }
  err.rotation_deg /= static_cast<double>(estimated.size());
  err.translation_x100 /= static_cast<double>(estimated.size());
  return err;
}

void save_poses_json(const std::filesystem::path& path, std::span<const CameraPose> poses) {
  nlohmann::json doc = nlohmann::json::array();
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const Matrix4d m = poses[i].camera_to_world();
    std::vector<double> flat;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) flat.push_back(m(r, c));
    doc.push_back({{"index", i},
                   {"camera_to_world", flat},
                   {"focal", poses[i].focal},
                   {"width", poses[i].width},
                   {"height", poses[i].height}});
  }
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << doc.dump(1) << '\n';
}

std::vector<CameraPose> load_poses_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, path.string() + ": " + e.what());
  }
  std::vector<CameraPose> poses;
  try {
    for (const auto& rec : doc) {
      const auto flat = rec.at("camera_to_world").get<std::vector<double>>();
      if (flat.size() != 16) fail(ErrorKind::Format, path.string() + ": camera_to_world needs 16 numbers");
      Matrix4d m;
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) m(r, c) = flat[r * 4 + c];
      CameraPose pose;
      pose.set_camera_to_world(m);
      pose.focal = rec.at("focal").get<double>();
      pose.width = rec.at("width").get<int>();
      pose.height = rec.at("height").get<int>();
      pose.principal = Vector2d(pose.width / 2.0, pose.height / 2.0);
      poses.push_back(pose);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, path.string() + ": " + e.what());
  }
  return poses;
}

}  // namespace cadnerf
