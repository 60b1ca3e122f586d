#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cadnerf/autodiff.hpp"
#include "cadnerf/camera.hpp"
#include "cadnerf/fields.hpp"
#include "cadnerf/image.hpp"
#include "cadnerf/library.hpp"
#include "cadnerf/mesh.hpp"
#include "cadnerf/optim.hpp"
#include "cadnerf/render.hpp"
#include "cadnerf/retrieval.hpp"

namespace cadnerf {

/// Training schedule and hyper-parameters. Iteration numbers are global:
/// phase 1 covers [0, p1), phase 2 [p1, p1+p2), phase 3 the rest.
struct TrainConfig {
  int phase1_iterations = 5000;
  int phase2_iterations = 5000;
  int phase3_iterations = 10000;
  int pose_start = 7500;
  int pose_end = 10000;
  /// Background mode only: object-only density supervision before this.
  int background_boundary = 5000;

  double learning_rate = 5e-4;
  double lambda_a = 10.0;
  double lambda_b = 0.1;

  int batch_rays = 1024;
  int samples = 128;
  int occupancy_batch = 4096;
  int occupancy_pool = 65536;
  double near_surface_fraction = 0.5;
  double near_surface_sigma = 0.02;
  double scene_extent = 0.6;  // uniform samples in [-e, e]^3
  double density_scale = 50.0;
  double mask_dilation = 0.1;
  /// Object mode: share of rays drawn from anywhere in the image so empty
  /// space outside the dilated silhouettes is also supervised.
  double background_ray_fraction = 0.2;
  double near = 1.0;
  double far = 3.0;
  bool stratified = true;

  int hidden = 128;
  int feature = 128;
  int deform_hidden = 128;
  int color_hidden = 128;
  int resnet_blocks = 4;
  int position_frequencies = 10;
  int direction_frequencies = 4;

  std::uint64_t seed = 0;
  int threads = 1;

  bool use_init = true;
  bool use_pose_opt = true;
  bool use_deformation = true;
  bool background_mode = false;

  std::string checkpoint_dir;  // empty: no checkpoint files
  std::string loss_csv;        // empty: no loss history file

  int total_iterations() const { return phase1_iterations + phase2_iterations + phase3_iterations; }
  int phase1_end() const { return phase1_iterations; }
  int phase2_end() const { return phase1_iterations + phase2_iterations; }
  /// Throws InvalidInput when counts or the pose window are inconsistent.
  void validate() const;
};

/// Proportionally rescaled schedule for a total iteration budget with small
/// networks and ray batches suited to a single CPU core.
TrainConfig desk_preset(int total_iterations);

struct ConfigKey {
  std::string name;
  std::string help;
};
const std::vector<ConfigKey>& config_keys();
void set_config_value(TrainConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const TrainConfig& config, const std::string& key);
/// Reads `key = value` lines; '#' starts a comment.
void load_config_file(const std::filesystem::path& path, TrainConfig& config);
void save_config_file(const std::filesystem::path& path, const TrainConfig& config);

struct LossRecord {
  int iteration = 0;
  int phase = 0;
  double color = 0.0;
  double density = 0.0;
  double offset = 0.0;
  double correction = 0.0;
  double total = 0.0;
};

/// One posed training image.
struct TrainView {
  RgbImage image;
  MaskRaster mask;
  CameraPose init_pose;
};

struct TrainState {
  FieldParams fields;
  std::vector<ad::Tensor> pose_params;  // one 1x6 row per view
  ad::Adam optimizer;
  int iteration = 0;
  std::vector<LossRecord> history;
  /// Last phase-boundary snapshot; restored when training diverges.
  std::optional<ad::Checkpoint> last_checkpoint;

  PoseUpdate pose_update(std::size_t view) const;
};

/// Fresh fields and zero pose updates registered with one optimizer.
TrainState make_state(const TrainConfig& config, std::size_t view_count);

/// Annealing progress alpha of the deformation encoding at a global
/// iteration: 0 in phase 1, a linear ramp to L_x over the first half of
/// phase 2, then L_x.
double anneal_alpha(const TrainConfig& config, int iteration);

DeformMode deform_mode(const TrainConfig& config);
RenderConfig render_config(const TrainConfig& config, int iteration, bool with_color);

/// Points with parity occupancy labels used for density supervision.
struct OccupancySamples {
  ad::Matrix points;  // N x 3
  ad::Matrix labels;  // N x 1
};
OccupancySamples sample_occupancy(const TriangleMesh& mesh, int count, const TrainConfig& config,
                                  std::uint64_t seed);

void phase1_pretrain(const TriangleMesh& mesh, TrainState& state, const TrainConfig& config);
void phase2_deform_and_pose(const std::vector<TrainView>& views, TrainState& state, const TrainConfig& config);
void phase3_joint(const std::vector<TrainView>& views, TrainState& state, const TrainConfig& config);
/// Full schedule for scenes with a backdrop: density supervision on the
/// object before the boundary, then color on all pixels.
void train_with_background(const std::vector<TrainView>& views, const TriangleMesh& mesh, TrainState& state,
                           const TrainConfig& config);

/// Steps only the pose group for `iterations` steps against the views'
/// silhouettes (or colors when `with_color`), leaving the fields frozen.
void optimize_poses_only(const std::vector<TrainView>& views, TrainState& state, const TrainConfig& config,
                         int iterations, bool with_color = false);

/// Phases 1 to 3 (or the background schedule) on already posed views.
TrainState train(const std::vector<TrainView>& views, const TriangleMesh& mesh, const TrainConfig& config);

/// Camera with the current update applied.
CameraPose optimized_pose(const TrainState& state, const std::vector<TrainView>& views, std::size_t view);

/// Intrinsics of a library pose rescaled to an input raster size.
CameraPose adapt_to_image(const CameraPose& library_pose, double library_radius, int width, int height);

struct PipelineInput {
  std::vector<RgbImage> images;
  std::vector<MaskRaster> masks;
};

struct PipelineResult {
  RetrievalResult retrieval;
  std::vector<int> view_indices;  // input index of each training view
  std::vector<TrainView> views;
  TrainState state;
  std::vector<double> train_psnr;
};

/// Retrieval, then the training schedule on the retained views.
PipelineResult run_full(const PipelineInput& input, const Library& library, const TrainConfig& config,
                        const RetrievalOptions& retrieval = {});

ad::Checkpoint make_checkpoint(const TrainState& state);
void restore_checkpoint(TrainState& state, const ad::Checkpoint& checkpoint);
void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& history);

}  // namespace cadnerf
