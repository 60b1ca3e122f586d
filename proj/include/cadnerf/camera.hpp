#pragma once

#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace cadnerf {

/// Pinhole camera with a camera-to-world rigid transform.
///
/// Camera axes follow the graphics convention: +x right, +y up, and the
/// camera looks down its local -z axis. Pixel (col,row) has its center at
/// (col+0.5, row+0.5); rows grow downwards.
struct CameraPose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // camera-to-world
  Eigen::Vector3d center = Eigen::Vector3d::Zero();        // camera origin in world
  double focal = 1.0;                                      // pixels
  Eigen::Vector2d principal = Eigen::Vector2d::Zero();     // pixels
  int width = 1;
  int height = 1;

  Eigen::Matrix4d camera_to_world() const;
  void set_camera_to_world(const Eigen::Matrix4d& m);
  Eigen::Vector3d forward() const { return -rotation.col(2); }
};

/// Rigid update (rotation as axis-angle, translation in world units).
struct PoseUpdate {
  Eigen::Vector3d axis_angle = Eigen::Vector3d::Zero();
  Eigen::Vector3d delta_t = Eigen::Vector3d::Zero();
};

struct Ray {
  Eigen::Vector3d origin;
  Eigen::Vector3d direction;  // unit
  double t_near = 0.0;
  double t_far = 1.0;

  Eigen::Vector3d at(double t) const { return origin + t * direction; }
};

struct RayBounds {
  double t_near = 1.0;
  double t_far = 3.0;
};

Eigen::Matrix3d skew(const Eigen::Vector3d& v);
Eigen::Matrix3d so3_exp(const Eigen::Vector3d& axis_angle);
Eigen::Vector3d so3_log(const Eigen::Matrix3d& rotation);
/// Geodesic angle between two rotations, radians.
double rotation_angle_between(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b);

/// Focal length such that the unit-cube bounding sphere spans ~80% of the
/// image when viewed from `radius`.
double library_focal(int resolution, double radius);

/// Camera at `center` looking at `target`; up defaults to +z, falling back to
/// +x when the view direction is (anti)parallel to it.
CameraPose look_at(const Eigen::Vector3d& center, const Eigen::Vector3d& target, double focal,
                   int width, int height);

/// Fibonacci-lattice poses on a sphere, sorted by (azimuth, elevation). The
/// position in the returned list is the library pose index.
std::vector<CameraPose> sample_library_poses(int count, double radius, int resolution = 128);

/// Azimuth in (-pi, pi] and elevation in [-pi/2, pi/2] of a camera center.
std::pair<double, double> azimuth_elevation(const Eigen::Vector3d& center);

Eigen::Vector3d camera_ray_direction(const CameraPose& pose, const Eigen::Vector2d& pixel);
Ray generate_ray(const CameraPose& pose, const Eigen::Vector2d& pixel, RayBounds bounds);
std::vector<Ray> generate_rays(const CameraPose& pose, std::span<const Eigen::Vector2d> pixels,
                               RayBounds bounds);

/// P_opt = T * P_init with T = [exp(axis_angle) | delta_t].
CameraPose apply_pose_update(const PoseUpdate& update, const CameraPose& init);

struct PoseErrors {
  double rotation_deg = 0.0;
  double translation_x100 = 0.0;
};

/// Aligns `estimated` onto `reference` with a similarity transform fitted on
/// camera centers, then reports mean geodesic rotation error (degrees) and
/// mean center distance times 100.
PoseErrors pose_registration_error(std::span<const CameraPose> estimated,
                                   std::span<const CameraPose> reference);

/// Similarity transform mapping `from` points onto `to` (least squares).
struct Similarity {
  double scale = 1.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return scale * rotation * p + translation; }
  CameraPose apply(const CameraPose& pose) const;
};
Similarity fit_similarity(std::span<const Eigen::Vector3d> from, std::span<const Eigen::Vector3d> to);

void save_poses_json(const std::filesystem::path& path, std::span<const CameraPose> poses);
std::vector<CameraPose> load_poses_json(const std::filesystem::path& path);

}  // namespace cadnerf
