#pragma once

#include <filesystem>
#include <map>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cadnerf/camera.hpp"
#include "cadnerf/image.hpp"
#include "cadnerf/render.hpp"

namespace cadnerf {

struct TrainState;
struct TrainView;
struct TrainConfig;

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) over all channels, capped at 99 dB.
double psnr(const RgbImage& a, const RgbImage& b);

/// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5), averaged over
/// channels. Only windows fully inside the image are used.
double ssim(const RgbImage& a, const RgbImage& b);

/// Geometric mean of 10^(-psnr/10), sqrt(1 - ssim) and lpips; 0 when ssim >= 1.
double average_metric(double psnr_db, double ssim_value, double lpips);

struct MetricsRow {
  std::string view;
  double psnr = 0.0;
  double ssim = 0.0;
  std::optional<double> lpips;
  std::optional<double> average;
};

struct HeldoutView {
  std::string name;
  RgbImage image;
  CameraPose pose;  // reference pose in the ground-truth frame
};

struct EvalOptions {
  /// Ground-truth poses of the training views, in training-view order.
  std::optional<std::vector<CameraPose>> gt_train_poses;
  /// Map held-out poses through the similarity fitted from the ground-truth
  /// training poses onto the optimized ones (needs gt_train_poses).
  bool align_heldout = true;
  /// Photometric refinement steps of each held-out pose with the fields
  /// frozen (0 renders the reference pose as given).
  int refine_iterations = 0;
  int refine_rays = 256;
  double refine_learning_rate = 2e-3;
  std::uint64_t refine_seed = 0;
  std::map<std::string, double> lpips;  // per held-out view name
  std::filesystem::path out_dir;        // empty: no files written
};

struct EvalReport {
  std::vector<MetricsRow> rows;
  std::optional<PoseErrors> pose_errors;
  std::vector<RgbImage> renders;
};

/// Poses in the learned frame for reference poses given in the ground-truth
/// frame, via the similarity fitted on camera centers.
std::vector<CameraPose> align_poses(std::span<const CameraPose> gt_train, std::span<const CameraPose> learned_train,
                                    std::span<const CameraPose> gt_other);

/// Adjusts `pose` so renders of the frozen fields match `image`; returns the
/// refined camera.
CameraPose refine_pose(const TrainState& state, const TrainConfig& config, const RgbImage& image,
                       const CameraPose& pose, int iterations, int rays, double learning_rate, std::uint64_t seed);

EvalReport evaluate_run(const TrainState& state, const std::vector<TrainView>& views,
                        const std::vector<HeldoutView>& heldout, const TrainConfig& config,
                        const EvalOptions& options = {});

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);
void write_pose_errors_csv(const std::filesystem::path& path, const PoseErrors& errors);
/// Reads `view,lpips` lines (header optional).
std::map<std::string, double> read_lpips_csv(const std::filesystem::path& path);

}  // namespace cadnerf
