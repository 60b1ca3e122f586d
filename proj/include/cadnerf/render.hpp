#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "cadnerf/autodiff.hpp"
#include "cadnerf/camera.hpp"
#include "cadnerf/fields.hpp"
#include "cadnerf/image.hpp"

namespace cadnerf {

/// Quadrature points for a set of rays. `ts` is rays x samples, strictly
/// increasing along each row and inside [t_near, t_far] of its ray.
struct RaySampleBatch {
  std::vector<Ray> rays;
  ad::Matrix ts;
  std::uint64_t seed = 0;

  Eigen::Index ray_count() const { return ts.rows(); }
  Eigen::Index samples() const { return ts.cols(); }
};

/// Splits each ray into `n_samples` equal bins and takes the bin midpoint, or
/// a uniform jitter inside the bin when `stratified`.
RaySampleBatch sample_along_rays(std::vector<Ray> rays, int n_samples, bool stratified, std::uint64_t seed);

/// Ray origins and unit directions as rays x 3 tensors.
struct RayTensors {
  ad::Tensor origins;
  ad::Tensor directions;
};

RayTensors ray_tensors(std::span<const Ray> rays);

/// exp([w]x) transposed, for a 1x3 axis-angle row. Differentiable.
ad::Tensor so3_exp_transposed(const ad::Tensor& axis_angle);

/// Rays through `pixels` of the camera T * P_init, where T is given by the
/// 1x6 parameter row (axis-angle, translation). Gradients flow into `update`.
RayTensors pose_rays(const CameraPose& init, const ad::Tensor& update, std::span<const Eigen::Vector2d> pixels);

/// Densities (N x 1, in [0,1]) and colors (N x 3) at N sample points, plus
/// the optional deformation outputs for the regularizers.
struct FieldSample {
  ad::Tensor sigma;
  ad::Tensor rgb;
  ad::Tensor offset;
  ad::Tensor correction;
};

/// points and view directions are N x 3, ordered ray-major.
using FieldFn = std::function<FieldSample(const ad::Tensor& points, const ad::Tensor& directions)>;

struct RenderOutput {
  ad::Tensor rgb;               // rays x 3, composited on black
  ad::Tensor opacity;           // rays x 1
  ad::Matrix transmittance;     // rays x samples, T_i before sample i
  ad::Matrix weights;           // rays x samples, T_i * alpha_i
  ad::Tensor offsets;           // N x 3 or undefined
  ad::Tensor corrections;       // N x 1 or undefined
};

/// Alpha compositing of per-sample densities and colors:
/// alpha_i = 1 - exp(-s sigma_i delta_i), T_i = prod_{j<i}(1 - alpha_j).
/// delta_i = t_{i+1} - t_i, and the last one runs to t_far.
RenderOutput composite(const RaySampleBatch& batch, const ad::Tensor& sigma, const ad::Tensor& rgb,
                       double density_scale);

RenderOutput render_field(const RaySampleBatch& batch, const RayTensors& rays, const FieldFn& field,
                          double density_scale);

struct RenderConfig {
  /// Multiplies the [0,1] density before quadrature.
  double density_scale = 1.0;
  double alpha = 10.0;
  DeformMode mode = DeformMode::Disabled;
  /// When false, every sample is white so the output is the opacity matte.
  bool with_color = true;
  /// Density is zero outside [-e, e]^3 when e > 0 (the supervised region).
  double scene_extent = 0.0;
};

FieldFn network_field(const FieldParams& params, const RenderConfig& config);

RenderOutput render_rays(const RaySampleBatch& batch, const RayTensors& rays, const FieldParams& params,
                         const RenderConfig& config);
RenderOutput render_rays(const RaySampleBatch& batch, const FieldParams& params, const RenderConfig& config);

/// Renders every pixel of `pose` with midpoint sampling, `chunk` rays at a time.
RgbImage render_image(const FieldParams& params, const CameraPose& pose, RayBounds bounds,
                      const RenderConfig& config, int samples, int chunk = 1024);

// Losses ------------------------------------------------------------------

/// Mean over rays of the squared L2 color error.
ad::Tensor loss_color(const ad::Tensor& rgb, const ad::Matrix& target);
/// Binary cross-entropy with the prediction clipped to [eps, 1-eps].
ad::Tensor loss_density(const ad::Tensor& sigma, const ad::Matrix& occupancy, double eps = 1e-7);
/// (mean ||o||, mean |c1|). Undefined inputs give zero.
std::pair<ad::Tensor, ad::Tensor> loss_regularizers(const ad::Tensor& offsets, const ad::Tensor& corrections);
ad::Tensor loss_total(const ad::Tensor& color, const ad::Tensor& offset, const ad::Tensor& correction,
                      double lambda_a = 10.0, double lambda_b = 0.1);

/// One line per ray: ray, opacity, r, g, b.
void write_ray_dump_csv(const std::filesystem::path& path, const RenderOutput& output);

}  // namespace cadnerf
