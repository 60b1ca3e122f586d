#include "cadnerf/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "cadnerf/errors.hpp"
#include "cadnerf/evalkit.hpp"
#include "cadnerf/parallel.hpp"

namespace cadnerf {

using ad::Matrix;
using ad::Tensor;
using Eigen::Index;

// ---------------------------------------------------------------------------
// Configuration

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorKind::InvalidInput, what);
  };
  require(phase1_iterations >= 0 && phase2_iterations > 0 && phase3_iterations >= 0,
          "phase iteration counts must be non-negative (phase 2 positive)");
  require(pose_start <= pose_end, "pose_start must not exceed pose_end");
  require(pose_start >= phase1_end() && pose_end <= total_iterations(),
          "pose window must lie inside phases 2 and 3");
  require(background_boundary >= 0 && background_boundary <= total_iterations(),
          "background_boundary must lie inside the schedule");
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(lambda_a >= 0.0 && lambda_b >= 0.0, "loss weights must be non-negative");
  require(batch_rays > 0 && samples >= 2 && occupancy_batch > 0 && occupancy_pool > 0,
          "batch sizes must be positive (samples >= 2)");
  require(near_surface_fraction >= 0.0 && near_surface_fraction <= 1.0, "near_surface_fraction must be in [0,1]");
  require(near > 0.0 && far > near, "ray bounds must satisfy 0 < near < far");
  require(background_ray_fraction >= 0.0 && background_ray_fraction <= 1.0,
          "background_ray_fraction must be in [0,1]");
  require(density_scale > 0.0, "density_scale must be positive");
  require(hidden > 0 && feature > 0 && deform_hidden > 0 && color_hidden > 0 && resnet_blocks >= 0,
          "network widths must be positive");
  require(position_frequencies >= 0 && direction_frequencies >= 0, "frequency counts must be non-negative");
  require(threads >= 1, "threads must be >= 1");
}

TrainConfig desk_preset(int total_iterations) {
  if (total_iterations < 8) fail(ErrorKind::InvalidInput, "desk preset needs at least 8 iterations");
  TrainConfig c;
  c.phase1_iterations = total_iterations / 4;
  c.phase2_iterations = total_iterations / 4;
  c.phase3_iterations = total_iterations - c.phase1_iterations - c.phase2_iterations;
  c.pose_start = total_iterations * 3 / 8;
  c.pose_end = c.phase2_end();
  c.background_boundary = total_iterations / 4;
  c.learning_rate = 5e-3;
  c.batch_rays = 64;
  c.samples = 32;
  c.occupancy_batch = 512;
  c.occupancy_pool = 16384;
  c.hidden = 48;
  c.feature = 32;
  c.deform_hidden = 32;
  c.color_hidden = 32;
  c.position_frequencies = 4;
  c.direction_frequencies = 2;
  return c;
}

namespace {

struct Binding {
  ConfigKey key;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  fail(ErrorKind::InvalidInput, "invalid value '" + value + "' for key '" + key + "'");
}

template <class T>
T parse_integer(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto r = std::from_chars(value.data(), end, out);
  if (r.ec != std::errc() || r.ptr != end) bad_value(key, value);
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  if (value.empty()) bad_value(key, value);
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (end != value.c_str() + value.size() || !std::isfinite(v)) bad_value(key, value);
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  bad_value(key, value);
}

Binding bind(const char* name, const char* help, int TrainConfig::*field) {
  return {{name, help},
          [name, field](TrainConfig& c, const std::string& v) { c.*field = parse_integer<int>(name, v); },
          [field](const TrainConfig& c) { return std::to_string(c.*field); }};
}
Binding bind(const char* name, const char* help, double TrainConfig::*field) {
  return {{name, help},
          [name, field](TrainConfig& c, const std::string& v) { c.*field = parse_double(name, v); },
          [field](const TrainConfig& c) { return format_double(c.*field); }};
}
Binding bind(const char* name, const char* help, bool TrainConfig::*field) {
  return {{name, help},
          [name, field](TrainConfig& c, const std::string& v) { c.*field = parse_bool(name, v); },
          [field](const TrainConfig& c) { return std::string(c.*field ? "true" : "false"); }};
}
Binding bind(const char* name, const char* help, std::uint64_t TrainConfig::*field) {
  return {{name, help},
          [name, field](TrainConfig& c, const std::string& v) { c.*field = parse_integer<std::uint64_t>(name, v); },
          [field](const TrainConfig& c) { return std::to_string(c.*field); }};
}
Binding bind(const char* name, const char* help, std::string TrainConfig::*field) {
  return {{name, help}, [field](TrainConfig& c, const std::string& v) { c.*field = v; },
          [field](const TrainConfig& c) { return c.*field; }};
}

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> table = {
      bind("phase1_iterations", "density pretraining iterations", &TrainConfig::phase1_iterations),
      bind("phase2_iterations", "deformation and pose iterations", &TrainConfig::phase2_iterations),
      bind("phase3_iterations", "joint color iterations", &TrainConfig::phase3_iterations),
      bind("pose_start", "first iteration that updates poses", &TrainConfig::pose_start),
      bind("pose_end", "iteration at which poses freeze", &TrainConfig::pose_end),
      bind("background_boundary", "background mode: end of object-only supervision",
           &TrainConfig::background_boundary),
      bind("learning_rate", "Adam learning rate", &TrainConfig::learning_rate),
      bind("lambda_a", "offset regularizer weight", &TrainConfig::lambda_a),
      bind("lambda_b", "correction regularizer weight", &TrainConfig::lambda_b),
      bind("batch_rays", "rays per iteration", &TrainConfig::batch_rays),
      bind("samples", "quadrature samples per ray", &TrainConfig::samples),
      bind("occupancy_batch", "labelled points per density iteration", &TrainConfig::occupancy_batch),
      bind("occupancy_pool", "labelled points precomputed for density supervision", &TrainConfig::occupancy_pool),
      bind("near_surface_fraction", "share of labelled points jittered around the surface",
           &TrainConfig::near_surface_fraction),
      bind("near_surface_sigma", "std-dev of the surface jitter", &TrainConfig::near_surface_sigma),
      bind("scene_extent", "half side of the uniform sampling box", &TrainConfig::scene_extent),
      bind("density_scale", "multiplier applied to the [0,1] density before compositing",
           &TrainConfig::density_scale),
      bind("background_ray_fraction", "share of object-mode rays drawn from the whole image",
           &TrainConfig::background_ray_fraction),
      bind("mask_dilation", "silhouette dilation as a fraction of the mask size", &TrainConfig::mask_dilation),
      bind("near", "near ray bound", &TrainConfig::near),
      bind("far", "far ray bound", &TrainConfig::far),
      bind("stratified", "jitter samples inside their bins", &TrainConfig::stratified),
      bind("hidden", "density network width", &TrainConfig::hidden),
      bind("feature", "feature vector width", &TrainConfig::feature),
      bind("deform_hidden", "deformation network width", &TrainConfig::deform_hidden),
      bind("color_hidden", "color network width", &TrainConfig::color_hidden),
      bind("resnet_blocks", "residual blocks in the density network", &TrainConfig::resnet_blocks),
      bind("position_frequencies", "positional encoding bands for points", &TrainConfig::position_frequencies),
      bind("direction_frequencies", "positional encoding bands for directions",
           &TrainConfig::direction_frequencies),
      bind("seed", "random seed", &TrainConfig::seed),
      bind("threads", "worker threads", &TrainConfig::threads),
      bind("use_init", "run density pretraining on the retrieved model", &TrainConfig::use_init),
      bind("use_pose_opt", "optimize camera poses inside the pose window", &TrainConfig::use_pose_opt),
      bind("use_deformation", "enable the deformation network", &TrainConfig::use_deformation),
      bind("background_mode", "train on full images with a backdrop", &TrainConfig::background_mode),
      bind("checkpoint_dir", "directory for phase checkpoints", &TrainConfig::checkpoint_dir),
      bind("loss_csv", "loss history output path", &TrainConfig::loss_csv),
  };
  return table;
}

const Binding& find_binding(const std::string& key) {
  for (const auto& b : bindings()) {
    if (b.key.name == key) return b;
  }
  fail(ErrorKind::InvalidInput, "unknown config key '" + key + "'");
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& b : bindings()) out.push_back(b.key);
    return out;
  }();
  return keys;
}

void set_config_value(TrainConfig& config, const std::string& key, const std::string& value) {
  find_binding(key).set(config, value);
}

std::string get_config_value(const TrainConfig& config, const std::string& key) {
  return find_binding(key).get(config);
}

void load_config_file(const std::filesystem::path& path, TrainConfig& config) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open config " + path.string());
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::Format, path.string() + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    set_config_value(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void save_config_file(const std::filesystem::path& path, const TrainConfig& config) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  for (const auto& b : bindings()) out << b.key.name << " = " << b.get(config) << '\n';
}

// ---------------------------------------------------------------------------
// State

PoseUpdate TrainState::pose_update(std::size_t view) const {
  const Matrix& v = pose_params.at(view).value();
  PoseUpdate u;
  u.axis_angle = Eigen::Vector3d(v(0, 0), v(0, 1), v(0, 2));
  u.delta_t = Eigen::Vector3d(v(0, 3), v(0, 4), v(0, 5));
  return u;
}

TrainState make_state(const TrainConfig& config, std::size_t view_count) {
  config.validate();
  FieldConfig fc;
  fc.hidden = config.hidden;
  fc.feature = config.feature;
  fc.deform_hidden = config.deform_hidden;
  fc.color_hidden = config.color_hidden;
  fc.resnet_blocks = config.resnet_blocks;
  EncodingConfig ec;
  ec.position_frequencies = config.position_frequencies;
  ec.direction_frequencies = config.direction_frequencies;
  ec.alpha = config.position_frequencies;

  TrainState state;
  state.fields = FieldParams::create(fc, ec, config.seed);
  ad::AdamConfig ac;
  ac.learning_rate = config.learning_rate;
  state.optimizer = ad::Adam(ac);
  for (const char* net : {"density", "deform", "color"}) {
    for (auto& [name, t] : state.fields.parameters(net)) state.optimizer.add(name, t, net);
  }
  for (std::size_t i = 0; i < view_count; ++i) {
    state.pose_params.push_back(Tensor::parameter(Matrix::Zero(1, 6)));
    state.optimizer.add("pose." + std::to_string(i), state.pose_params.back(), "pose");
  }
  return state;
}

double anneal_alpha(const TrainConfig& config, int iteration) {
  const double full = config.position_frequencies;
  const int start = config.background_mode ? config.background_boundary : config.phase1_end();
  const double ramp = std::max(1.0, config.phase2_iterations / 2.0);
  if (iteration < start) return 0.0;
  return std::min(full, full * (iteration - start) / ramp);
}

DeformMode deform_mode(const TrainConfig& config) {
  return config.use_deformation ? DeformMode::Learned : DeformMode::Disabled;
}

RenderConfig render_config(const TrainConfig& config, int iteration, bool with_color) {
  RenderConfig rc;
  rc.density_scale = config.density_scale;
  rc.alpha = anneal_alpha(config, iteration);
  rc.mode = deform_mode(config);
  rc.with_color = with_color;
  rc.scene_extent = config.scene_extent;
  return rc;
}

CameraPose optimized_pose(const TrainState& state, const std::vector<TrainView>& views, std::size_t view) {
  return apply_pose_update(state.pose_update(view), views.at(view).init_pose);
}

CameraPose adapt_to_image(const CameraPose& library_pose, double library_radius, int width, int height) {
  CameraPose p = library_pose;
  p.width = width;
  p.height = height;
  p.focal = library_focal(width, library_radius);
  p.principal = Eigen::Vector2d(width / 2.0, height / 2.0);
  return p;
}

ad::Checkpoint make_checkpoint(const TrainState& state) {
  ad::Checkpoint ck;
  ad::export_optimizer(state.optimizer, ck);
  ck.tensors["state/iteration"] = Matrix::Constant(1, 1, state.iteration);
  return ck;
}

void restore_checkpoint(TrainState& state, const ad::Checkpoint& checkpoint) {
  ad::import_optimizer(state.optimizer, checkpoint);
  if (auto it = checkpoint.tensors.find("state/iteration"); it != checkpoint.tensors.end()) {
    state.iteration = static_cast<int>(it->second(0, 0));
    while (!state.history.empty() && state.history.back().iteration >= state.iteration) state.history.pop_back();
  }
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& history) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) fail(ErrorKind::Io, "cannot write " + tmp);
    out << "iteration,phase,L_color,L_density,L_offset,L_correction,total\n";
    for (const auto& r : history) {
      out << r.iteration << ',' << r.phase << ',' << format_double(r.color) << ',' << format_double(r.density) << ','
          << format_double(r.offset) << ',' << format_double(r.correction) << ',' << format_double(r.total) << '\n';
    }
    if (!out) fail(ErrorKind::Io, "failed writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Sampling

OccupancySamples sample_occupancy(const TriangleMesh& mesh, int count, const TrainConfig& config,
                                  std::uint64_t seed) {
  if (!mesh.watertight) fail(ErrorKind::InvalidInput, "density supervision needs a watertight mesh");
  if (count <= 0) fail(ErrorKind::InvalidInput, "sample count must be positive");
  const int near_count = static_cast<int>(std::lround(count * config.near_surface_fraction));
  const auto anchors = sample_surface(mesh, static_cast<std::size_t>(std::max(near_count, 1)), seed ^ 0xa11ce);
  const auto dirs = parity_directions(3);
  OccupancySamples out;
  out.points.resize(count, 3);
  out.labels.resize(count, 1);
  parallel_for(static_cast<std::size_t>(count), config.threads, [&](std::size_t i) {
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + i);
    std::uniform_real_distribution<double> uni(-config.scene_extent, config.scene_extent);
    std::normal_distribution<double> gauss(0.0, config.near_surface_sigma);
    const bool near = static_cast<int>(i) < near_count;
    for (;;) {
      Eigen::Vector3d p;
      if (near) {
        p = anchors[i] + Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng));
      } else {
        p = Eigen::Vector3d(uni(rng), uni(rng), uni(rng));
      }
      try {
        const int occ = occupancy(mesh, OccupancyQuery{p, dirs});
        out.points.row(static_cast<Index>(i)) = p.transpose();
        out.labels(static_cast<Index>(i), 0) = occ;
        return;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::SurfaceAmbiguous) throw;
      }
    }
  });
  return out;
}

namespace {

struct PixelRef {
  int view;
  int pixel;
};

std::vector<PixelRef> ray_pool(const std::vector<TrainView>& views, const TrainConfig& config, bool all_pixels) {
  std::vector<PixelRef> pool;
  for (std::size_t v = 0; v < views.size(); ++v) {
    const MaskRaster& m = views[v].mask;
    MaskRaster region = m;
    if (!all_pixels) {
      const BBox box = m.bbox();
      if (!box.valid) fail(ErrorKind::EmptySilhouette, "view " + std::to_string(v) + " has an empty mask");
      const int radius = static_cast<int>(std::ceil(config.mask_dilation * std::max(box.width(), box.height())));
      region = dilate(m, radius);
    }
    for (int p = 0; p < m.width * m.height; ++p) {
      if (all_pixels || region.pixels[static_cast<std::size_t>(p)]) pool.push_back({static_cast<int>(v), p});
    }
  }
  if (pool.empty()) fail(ErrorKind::InvalidInput, "no training rays");
  return pool;
}

struct RayBatch {
  RaySampleBatch samples;
  RayTensors rays;
  Matrix rgb;   // target colors
  Matrix mask;  // target silhouette replicated over three channels
};

struct RayPools {
  std::vector<PixelRef> focus;  // silhouettes plus dilation, or everything
  std::vector<PixelRef> all;    // every pixel of every view
  double all_fraction = 0.0;
};

RayPools ray_pools(const std::vector<TrainView>& views, const TrainConfig& config, bool all_pixels) {
  RayPools pools{ray_pool(views, config, all_pixels), ray_pool(views, config, true), 0.0};
  if (!all_pixels) pools.all_fraction = config.background_ray_fraction;
  return pools;
}

RayBatch draw_rays(const std::vector<TrainView>& views, const TrainState& state, const RayPools& pools,
                   const TrainConfig& config, std::mt19937_64& rng, bool pose_grad) {
  std::uniform_int_distribution<std::size_t> pick_focus(0, pools.focus.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_all(0, pools.all.size() - 1);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<std::vector<int>> per_view(views.size());
  for (int i = 0; i < config.batch_rays; ++i) {
    const bool anywhere = pools.all_fraction > 0.0 && coin(rng) < pools.all_fraction;
    const PixelRef& ref = anywhere ? pools.all[pick_all(rng)] : pools.focus[pick_focus(rng)];
    per_view[static_cast<std::size_t>(ref.view)].push_back(ref.pixel);
  }
  RayBatch batch;
  batch.rgb.resize(config.batch_rays, 3);
  batch.mask.resize(config.batch_rays, 3);
  std::vector<Tensor> origins, dirs;
  std::vector<Ray> rays;
  Index row = 0;
  for (std::size_t v = 0; v < views.size(); ++v) {
    if (per_view[v].empty()) continue;
    const TrainView& view = views[v];
    std::vector<Eigen::Vector2d> pixels;
    for (int p : per_view[v]) {
      pixels.emplace_back(p % view.mask.width + 0.5, p / view.mask.width + 0.5);
      const double m = view.mask.pixels[static_cast<std::size_t>(p)];
      for (int c = 0; c < 3; ++c) {
        batch.rgb(row, c) = view.image.data[static_cast<std::size_t>(p) * 3 + c];
        batch.mask(row, c) = m;
      }
      ++row;
    }
    const Tensor update = pose_grad ? state.pose_params[v] : Tensor::constant(state.pose_params[v].value());
    RayTensors rt = pose_rays(view.init_pose, update, pixels);
    const Matrix& ov = rt.origins.value();
    const Matrix& dv = rt.directions.value();
    for (Index i = 0; i < dv.rows(); ++i) {
      rays.push_back(Ray{ov.row(i).transpose(), dv.row(i).transpose(), config.near, config.far});
    }
    origins.push_back(rt.origins);
    dirs.push_back(rt.directions);
  }
  batch.rays = {ad::concat_rows(origins), ad::concat_rows(dirs)};
  const std::uint64_t jitter_seed = config.seed ^ (0xB5AD4ECEDA1CE2A9ULL * static_cast<std::uint64_t>(state.iteration + 1));
  batch.samples = sample_along_rays(std::move(rays), config.samples, config.stratified, jitter_seed);
  return batch;
}

struct StepLosses {
  Tensor total;
  LossRecord record;
};

void check_views(const std::vector<TrainView>& views, std::size_t pose_count) {
  if (views.empty()) fail(ErrorKind::InvalidInput, "at least one training view is required");
  if (views.size() != pose_count) fail(ErrorKind::InvalidInput, "view count does not match pose parameters");
  for (const auto& v : views) {
    if (v.image.width != v.mask.width || v.image.height != v.mask.height || v.init_pose.width != v.mask.width ||
        v.init_pose.height != v.mask.height) {
      fail(ErrorKind::Dimension, "image, mask and camera sizes disagree");
    }
  }
}

/// Runs one optimizer step with the divergence guard.
template <class BuildLoss>
void guarded_step(TrainState& state, const std::vector<std::string>& groups, int phase, BuildLoss&& build) {
  try {
    state.optimizer.zero_grad();
    StepLosses s = build();
    if (!std::isfinite(s.record.total)) fail(ErrorKind::Divergence, "non-finite loss");
    ad::backward(s.total);
    state.optimizer.step(groups);
    s.record.iteration = state.iteration;
    s.record.phase = phase;
    state.history.push_back(s.record);
    ++state.iteration;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Divergence) throw;
    const int at = state.iteration;
    if (state.last_checkpoint) restore_checkpoint(state, *state.last_checkpoint);
    fail(ErrorKind::Divergence, "training diverged at iteration " + std::to_string(at) + ": " + e.what());
  }
  state.optimizer.zero_grad();
}

void phase_checkpoint(TrainState& state, const TrainConfig& config, const std::string& name) {
  state.last_checkpoint = make_checkpoint(state);
  if (!config.checkpoint_dir.empty()) {
    std::filesystem::create_directories(config.checkpoint_dir);
    ad::save_checkpoint(std::filesystem::path(config.checkpoint_dir) / (name + ".ckpt"), *state.last_checkpoint);
  }
}

StepLosses density_step(const OccupancySamples& pool, const TrainState& state, const TrainConfig& config,
                        std::mt19937_64& rng) {
  std::uniform_int_distribution<Index> pick(0, pool.points.rows() - 1);
  Matrix pts(config.occupancy_batch, 3), labels(config.occupancy_batch, 1);
  for (int i = 0; i < config.occupancy_batch; ++i) {
    const Index j = pick(rng);
    pts.row(i) = pool.points.row(j);
    labels(i, 0) = pool.labels(j, 0);
  }
  const auto d = density_eval(state.fields, Tensor::constant(std::move(pts)), config.position_frequencies);
  StepLosses s;
  s.total = loss_density(d.sigma, labels);
  s.record.density = s.total.item();
  s.record.total = s.record.density;
  return s;
}

StepLosses render_step(const std::vector<TrainView>& views, const RayPools& pool, const TrainState& state,
                       const TrainConfig& config, std::mt19937_64& rng, bool with_color, bool pose_grad) {
  const RayBatch batch = draw_rays(views, state, pool, config, rng, pose_grad);
  const RenderOutput out = render_rays(batch.samples, batch.rays, state.fields,
                                       render_config(config, state.iteration, with_color));
  const Tensor lc = loss_color(out.rgb, with_color ? batch.rgb : batch.mask);
  const auto [lo, lr] = loss_regularizers(out.offsets, out.corrections);
  StepLosses s;
  s.total = loss_total(lc, lo, lr, config.lambda_a, config.lambda_b);
  s.record.color = lc.item();
  s.record.offset = lo.item();
  s.record.correction = lr.item();
  s.record.total = s.total.item();
  return s;
}

bool in_pose_window(const TrainConfig& config, int iteration) {
  return config.use_pose_opt && iteration >= config.pose_start && iteration < config.pose_end;
}

std::mt19937_64 phase_rng(const TrainConfig& config, int phase) {
  return std::mt19937_64(config.seed * 0x2545F4914F6CDD1DULL + static_cast<std::uint64_t>(phase) * 0x9E3779B9ULL + 7);
}

}  // namespace

// ---------------------------------------------------------------------------
// Phases

void phase1_pretrain(const TriangleMesh& mesh, TrainState& state, const TrainConfig& config) {
  config.validate();
  const OccupancySamples pool = sample_occupancy(mesh, config.occupancy_pool, config, config.seed ^ 0x0cc);
  auto rng = phase_rng(config, 1);
  const std::vector<std::string> groups{"density"};
  while (state.iteration < config.phase1_end()) {
    guarded_step(state, groups, 1, [&] { return density_step(pool, state, config, rng); });
  }
  phase_checkpoint(state, config, "phase1");
}

void phase2_deform_and_pose(const std::vector<TrainView>& views, TrainState& state, const TrainConfig& config) {
  config.validate();
  check_views(views, state.pose_params.size());
  const auto pool = ray_pools(views, config, false);
  auto rng = phase_rng(config, 2);
  state.iteration = std::max(state.iteration, config.phase1_end());
  while (state.iteration < config.phase2_end()) {
    const bool poses = in_pose_window(config, state.iteration);
    std::vector<std::string> groups{"density"};
    if (config.use_deformation) groups.push_back("deform");
    if (poses) groups.push_back("pose");
    guarded_step(state, groups, 2, [&] { return render_step(views, pool, state, config, rng, false, poses); });
  }
  phase_checkpoint(state, config, "phase2");
}

void phase3_joint(const std::vector<TrainView>& views, TrainState& state, const TrainConfig& config) {
  config.validate();
  check_views(views, state.pose_params.size());
  const auto pool = ray_pools(views, config, false);
  auto rng = phase_rng(config, 3);
  state.iteration = std::max(state.iteration, config.phase2_end());
  while (state.iteration < config.total_iterations()) {
    const bool poses = in_pose_window(config, state.iteration);
    std::vector<std::string> groups{"density", "color"};
    if (config.use_deformation) groups.push_back("deform");
    if (poses) groups.push_back("pose");
    guarded_step(state, groups, 3, [&] { return render_step(views, pool, state, config, rng, true, poses); });
  }
  phase_checkpoint(state, config, "phase3");
}

void train_with_background(const std::vector<TrainView>& views, const TriangleMesh& mesh, TrainState& state,
                           const TrainConfig& config) {
  config.validate();
  if (!config.background_mode) fail(ErrorKind::InvalidInput, "background training requires background_mode = true");
  check_views(views, state.pose_params.size());
  if (state.iteration < config.background_boundary) {
    const OccupancySamples occ = sample_occupancy(mesh, config.occupancy_pool, config, config.seed ^ 0x0cc);
    auto rng = phase_rng(config, 1);
    while (state.iteration < config.background_boundary) {
      guarded_step(state, {"density"}, 1, [&] { return density_step(occ, state, config, rng); });
    }
    phase_checkpoint(state, config, "object");
  }
  const auto pool = ray_pools(views, config, true);
  auto rng = phase_rng(config, 2);
  while (state.iteration < config.total_iterations()) {
    const bool poses = in_pose_window(config, state.iteration);
    std::vector<std::string> groups{"density", "color"};
    if (config.use_deformation) groups.push_back("deform");
    if (poses) groups.push_back("pose");
    guarded_step(state, groups, 2, [&] { return render_step(views, pool, state, config, rng, true, poses); });
  }
  phase_checkpoint(state, config, "joint");
}

void optimize_poses_only(const std::vector<TrainView>& views, TrainState& state, const TrainConfig& config,
                         int iterations, bool with_color) {
  config.validate();
  check_views(views, state.pose_params.size());
  const auto pool = ray_pools(views, config, false);
  auto rng = phase_rng(config, 4);
  const int end = state.iteration + iterations;
  while (state.iteration < end) {
    guarded_step(state, {"pose"}, 2, [&] { return render_step(views, pool, state, config, rng, with_color, true); });
  }
  // Field parameters took part in the sweeps but must stay untouched.
  state.optimizer.zero_grad();
}

TrainState train(const std::vector<TrainView>& views, const TriangleMesh& mesh, const TrainConfig& config) {
  config.validate();
  TrainState state = make_state(config, views.size());
  if (config.background_mode) {
    train_with_background(views, mesh, state, config);
  } else {
    if (config.use_init) phase1_pretrain(mesh, state, config);
    state.iteration = config.phase1_end();
    phase2_deform_and_pose(views, state, config);
    phase3_joint(views, state, config);
  }
  if (!config.loss_csv.empty()) write_loss_csv(config.loss_csv, state.history);
  return state;
}

PipelineResult run_full(const PipelineInput& input, const Library& library, const TrainConfig& config,
                        const RetrievalOptions& retrieval) {
  config.validate();
  if (input.images.size() != input.masks.size()) fail(ErrorKind::InvalidInput, "one mask per image is required");
  PipelineResult result;
  result.retrieval = retrieve(input.masks, library, retrieval);
  const LibraryEntry& entry = library.entry(result.retrieval.model_id);
  for (const auto& a : result.retrieval.assignments) {
    const auto v = static_cast<std::size_t>(a.view);
    const MaskRaster& m = input.masks[v];
    result.view_indices.push_back(a.view);
    result.views.push_back(TrainView{input.images[v], m,
                                     adapt_to_image(entry.poses[static_cast<std::size_t>(a.pose_index)],
                                                    library.sampling.radius, m.width, m.height)});
  }
  result.state = train(result.views, entry.mesh, config);
  for (std::size_t v = 0; v < result.views.size(); ++v) {
    const RgbImage img = render_image(result.state.fields, optimized_pose(result.state, result.views, v),
                                      {config.near, config.far},
                                      render_config(config, config.total_iterations(), true), config.samples);
    result.train_psnr.push_back(psnr(img, result.views[v].image));
  }
  return result;
}

}  // namespace cadnerf
