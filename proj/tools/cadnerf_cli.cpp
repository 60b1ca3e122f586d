// Command-line front end: build-library, retrieve, train, render, eval.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include <CLI11.hpp>
#include <json.hpp>

#include "cadnerf/camera.hpp"
#include "cadnerf/errors.hpp"
#include "cadnerf/evalkit.hpp"
#include "cadnerf/image.hpp"
#include "cadnerf/library.hpp"
#include "cadnerf/mesh.hpp"
#include "cadnerf/optim.hpp"
#include "cadnerf/retrieval.hpp"
#include "cadnerf/shapes.hpp"
#include "cadnerf/synth.hpp"
#include "cadnerf/trainer.hpp"

namespace fs = std::filesystem;
using namespace cadnerf;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& item : items) {
    std::stringstream ss(item);
    std::string part;
    while (std::getline(ss, part, ',')) {
      if (!part.empty()) out.push_back(part);
    }
  }
  return out;
}

std::vector<double> parse_numbers(const std::string& text) {
  std::vector<double> out;
  for (const auto& s : split_list({text})) {
    try {
      out.push_back(std::stod(s));
    } catch (const std::exception&) {
      throw UsageError("not a number: '" + s + "'");
    }
  }
  return out;
}

void write_json(const fs::path& path, const nlohmann::json& doc) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

struct Inputs {
  std::vector<std::string> names;
  std::vector<RgbImage> images;
  std::vector<MaskRaster> masks;
};

/// Images in command-line order; masks from files or a luminance matte.
Inputs load_inputs(const std::vector<std::string>& image_paths, const std::vector<std::string>& mask_paths) {
  if (image_paths.empty()) throw UsageError("--images needs at least one file");
  if (!mask_paths.empty() && mask_paths.size() != image_paths.size()) {
    throw UsageError("--masks must list one mask per image");
  }
  Inputs in;
  for (std::size_t i = 0; i < image_paths.size(); ++i) {
    in.names.push_back(fs::path(image_paths[i]).stem().string());
    in.images.push_back(read_rgb_png(image_paths[i]));
    in.masks.push_back(mask_paths.empty() ? luminance_matte(in.images.back()) : read_mask_png(mask_paths[i]));
    if (in.masks.back().width != in.images.back().width || in.masks.back().height != in.images.back().height) {
      fail(ErrorKind::Dimension, "mask and image sizes differ for " + image_paths[i]);
    }
  }
  return in;
}

// Shared --seed/--threads/--config plus one flag per training config key.
struct ConfigFlags {
  std::string config_path;
  int desk = 0;
  std::map<std::string, std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "config file of 'key = value' lines");
    app->add_option("--desk", desk, "start from the desk preset with this total iteration count");
    for (const auto& key : config_keys()) {
      app->add_option_function<std::string>(
          "--" + key.name, [this, name = key.name](const std::string& v) { overrides[name] = v; }, key.help);
    }
  }

  TrainConfig resolve(bool config_required) const {
    TrainConfig config = desk > 0 ? desk_preset(desk) : TrainConfig{};
    if (!config_path.empty()) {
      if (!fs::exists(config_path)) {
        if (config_required) fail(ErrorKind::Io, "config file not found: " + config_path);
      } else {
        load_config_file(config_path, config);
      }
    }
    for (const auto& [k, v] : overrides) set_config_value(config, k, v);
    config.validate();
    return config;
  }
};

/// Rebuilds a trained state from a run directory.
struct LoadedRun {
  TrainConfig config;
  std::vector<TrainView> views;
  TrainState state;
};

LoadedRun load_run(const fs::path& run, const ConfigFlags& flags) {
  LoadedRun out;
  const fs::path cfg = run / "run.cfg";
  if (!fs::exists(cfg)) fail(ErrorKind::Io, "run directory lacks run.cfg: " + run.string());
  out.config = TrainConfig{};
  load_config_file(cfg, out.config);
  for (const auto& [k, v] : flags.overrides) set_config_value(out.config, k, v);
  const auto init = load_poses_json(run / "poses_init.json");
  for (const auto& p : init) {
    TrainView v;
    v.init_pose = p;
    v.mask.width = v.image.width = p.width;
    v.mask.height = v.image.height = p.height;
    out.views.push_back(std::move(v));
  }
  out.state = make_state(out.config, out.views.size());
  fs::path ckpt = run / "checkpoints" / "phase3.ckpt";
  if (!fs::exists(ckpt)) ckpt = run / "checkpoints" / "joint.ckpt";
  if (!fs::exists(ckpt)) fail(ErrorKind::Io, "run directory lacks a final checkpoint");
  restore_checkpoint(out.state, ad::load_checkpoint(ckpt));
  return out;
}

CameraPose orbit_pose(double azimuth_deg, double elevation_deg, double radius, int size) {
  const double a = azimuth_deg * std::numbers::pi / 180.0;
  const double e = elevation_deg * std::numbers::pi / 180.0;
  const Eigen::Vector3d c(radius * std::cos(e) * std::cos(a), radius * std::cos(e) * std::sin(a),
                          radius * std::sin(e));
  return look_at(c, Eigen::Vector3d::Zero(), library_focal(size, radius), size, size);
}

std::string pad_index(std::size_t i) {
  std::string s = std::to_string(i);
  return std::string(s.size() < 3 ? 3 - s.size() : 0, '0') + s;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Keep freed tensor buffers in the heap instead of returning them to the OS
  // after every op.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"Few-view reconstruction from a retrieved CAD prior"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  int threads = 1;
  app.add_option("--seed", seed, "random seed for every stochastic step")->capture_default_str();
  std::string global_config;
  app.add_option("--config", global_config, "training config file (same as the subcommand flag)");
  app.add_option("--threads", threads, "upper bound on worker threads")->capture_default_str()->check(CLI::PositiveNumber);

  // build-library --------------------------------------------------------
  auto* build = app.add_subcommand("build-library", "render silhouettes of CAD models from sampled poses");
  std::string meshes_dir, lib_out;
  std::vector<std::string> basic;
  LibrarySampling sampling;
  build->add_option("--meshes", meshes_dir, "directory of .obj models (id = file stem)");
  build->add_option("--basic-shapes", basic, "comma-separated built-in shapes: cuboid,sphere,cylinder,torus,lamp");
  build->add_option("--out", lib_out, "library output directory")->required();
  build->add_option("--poses", sampling.pose_count, "poses per model")->capture_default_str();
  build->add_option("--radius", sampling.radius, "camera distance")->capture_default_str();
  build->add_option("--resolution", sampling.resolution, "silhouette size in pixels")->capture_default_str();

  // retrieve -------------------------------------------------------------
  auto* retr = app.add_subcommand("retrieve", "pick a library model and one pose per ordered input view");
  std::string lib_dir, retr_out;
  std::vector<std::string> images, masks;
  RetrievalOptions ropts;
  retr->add_option("--library", lib_dir, "library directory")->required();
  retr->add_option("--images", images, "ordered input images (comma-separated or repeated)")->required();
  retr->add_option("--masks", masks, "silhouette masks aligned with --images (default: luminance matte)");
  retr->add_option("--k", ropts.k, "candidates per view")->capture_default_str();
  retr->add_option("--max-discard", ropts.max_discard, "views that may be skipped")->capture_default_str();
  retr->add_option("--out", retr_out, "also write the JSON document here");

  // train ----------------------------------------------------------------
  auto* tr = app.add_subcommand("train", "retrieve, then run the three training phases");
  std::string run_out = "run";
  ConfigFlags train_flags;
  tr->add_option("--library", lib_dir, "library directory");
  tr->add_option("--images", images, "ordered input images");
  tr->add_option("--masks", masks, "silhouette masks aligned with --images");
  tr->add_option("--k", ropts.k, "retrieval candidates per view")->capture_default_str();
  tr->add_option("--max-discard", ropts.max_discard, "views that may be skipped")->capture_default_str();
  tr->add_option("--out", run_out, "run output directory")->capture_default_str();
  train_flags.attach(tr);

  // render ---------------------------------------------------------------
  auto* rend = app.add_subcommand("render", "render a trained run, or ray-cast a painted mesh for test inputs");
  std::string run_dir, mesh_path, poses_path, render_out, azimuths;
  double elevation = 30.0, radius = 2.0;
  int size = 64;
  bool backdrop = false;
  ConfigFlags render_flags;
  rend->add_option("--run", run_dir, "trained run directory");
  rend->add_option("--mesh", mesh_path, "mesh to ray-cast with per-face colors (.obj or a built-in shape name)");
  rend->add_option("--poses", poses_path, "poses JSON to render (default for --run: optimized training poses)");
  rend->add_option("--azimuths", azimuths, "with --mesh: comma-separated orbit azimuths in degrees");
  rend->add_option("--elevation", elevation, "with --azimuths: elevation in degrees")->capture_default_str();
  rend->add_option("--radius", radius, "with --azimuths: camera distance")->capture_default_str();
  rend->add_option("--size", size, "with --azimuths: image size in pixels")->capture_default_str();
  rend->add_flag("--backdrop", backdrop, "with --mesh: add a floor plate behind the object");
  rend->add_option("--out", render_out, "output directory")->required();
  render_flags.attach(rend);

  // eval -----------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "render held-out views of a run and report metrics");
  std::vector<std::string> heldout_images;
  std::string heldout_poses, gt_poses, lpips_csv, eval_out;
  int refine = 0;
  ConfigFlags eval_flags;
  ev->add_option("--run", run_dir, "trained run directory")->required();
  ev->add_option("--heldout-images", heldout_images, "held-out reference images");
  ev->add_option("--heldout-poses", heldout_poses, "held-out reference poses JSON (ground-truth frame)");
  ev->add_option("--gt-poses", gt_poses, "ground-truth poses of the training views, in training order");
  ev->add_option("--lpips", lpips_csv, "optional CSV of view,lpips");
  ev->add_option("--refine", refine, "photometric refinement steps per held-out pose")->capture_default_str();
  ev->add_option("--out", eval_out, "report directory")->required();
  eval_flags.attach(ev);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return kExitUsage;
  }
  ropts.threads = threads;
  for (ConfigFlags* f : {&train_flags, &render_flags, &eval_flags}) {
    if (f->config_path.empty()) f->config_path = global_config;
  }

  try {
    if (*build) {
      std::vector<std::pair<std::string, TriangleMesh>> models;
      for (const auto& name : split_list(basic)) models.emplace_back(name, shapes::by_name(name));
      if (!meshes_dir.empty()) {
        if (!fs::is_directory(meshes_dir)) fail(ErrorKind::Io, "mesh directory not found: " + meshes_dir);
        std::vector<fs::path> paths;
        for (const auto& entry : fs::directory_iterator(meshes_dir)) {
          if (entry.path().extension() == ".obj") paths.push_back(entry.path());
        }
        std::sort(paths.begin(), paths.end());
        for (const auto& p : paths) models.emplace_back(p.stem().string(), load_mesh(p));
      }
      if (models.empty()) throw UsageError("give --meshes and/or --basic-shapes");
      const Library lib = build_library(models, sampling, threads);
      save_library(lib, lib_out);
      std::cout << "library: " << lib.entries.size() << " models x " << sampling.pose_count << " poses -> "
                << lib_out << '\n';
    } else if (*retr) {
      const Library lib = load_library(lib_dir);
      const Inputs in = load_inputs(split_list(images), split_list(masks));
      const RetrievalResult r = retrieve(in.masks, lib, ropts);
      const auto doc = retrieval_to_json(r, lib, in.names);
      if (!retr_out.empty()) write_json(retr_out, doc);
      std::cout << doc.dump(2) << '\n';
    } else if (*tr) {
      TrainConfig config;
      try {
        config = train_flags.resolve(true);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::InvalidInput) throw UsageError(e.what());
        throw;
      }
      if (app.count("--seed") > 0 && train_flags.overrides.count("seed") == 0) config.seed = seed;
      if (app.count("--threads") > 0 && train_flags.overrides.count("threads") == 0) config.threads = threads;
      if (lib_dir.empty() || !fs::exists(lib_dir)) fail(ErrorKind::Io, "library not found: '" + lib_dir + "'");
      const Library lib = load_library(lib_dir);
      const Inputs in = load_inputs(split_list(images), split_list(masks));
      const fs::path out(run_out);
      fs::create_directories(out);
      if (config.checkpoint_dir.empty()) config.checkpoint_dir = (out / "checkpoints").string();
      if (config.loss_csv.empty()) config.loss_csv = (out / "loss.csv").string();
      save_config_file(out / "run.cfg", config);

      PipelineInput pin{in.images, in.masks};
      const PipelineResult res = run_full(pin, lib, config, ropts);
      write_json(out / "retrieval.json", retrieval_to_json(res.retrieval, lib, in.names));
      std::vector<CameraPose> init, optimized;
      for (std::size_t v = 0; v < res.views.size(); ++v) {
        init.push_back(res.views[v].init_pose);
        optimized.push_back(optimized_pose(res.state, res.views, v));
      }
      save_poses_json(out / "poses_init.json", init);
      save_poses_json(out / "poses_optimized.json", optimized);
      std::ofstream m(out / "train_psnr.csv");
      m << "view,psnr\n";
      for (std::size_t v = 0; v < res.views.size(); ++v) {
        m << in.names[static_cast<std::size_t>(res.view_indices[v])] << ',' << res.train_psnr[v] << '\n';
      }
      std::cout << "model " << res.retrieval.model_id << ", " << res.views.size() << " views, "
                << res.state.history.size() << " iterations -> " << run_out << '\n';
    } else if (*rend) {
      const fs::path out(render_out);
      if (run_dir.empty() == mesh_path.empty()) throw UsageError("render needs exactly one of --run or --mesh");
      if (!mesh_path.empty()) {
        std::vector<CameraPose> poses;
        if (!azimuths.empty()) {
          for (double a : parse_numbers(azimuths)) poses.push_back(orbit_pose(a, elevation, radius, size));
        } else if (!poses_path.empty()) {
          poses = load_poses_json(poses_path);
        } else {
          throw UsageError("--mesh needs --azimuths or --poses");
        }
        const TriangleMesh mesh = fs::exists(mesh_path) ? load_mesh(mesh_path) : shapes::by_name(mesh_path);
        const ColoredMesh painted = paint_by_normal(mesh, default_palette());
        std::optional<ColoredMesh> floor;
        if (backdrop) {
          floor = ColoredMesh{shapes::transformed(shapes::cuboid(1.0, 1.0, 0.02), {3.0, 3.0, 3.0}, {0.0, 0.0, -0.56}),
                              {}};
          floor->face_colors.assign(floor->mesh.triangles.size(), Eigen::Vector3d(0.55, 0.5, 0.45));
        }
        fs::create_directories(out);
        for (std::size_t i = 0; i < poses.size(); ++i) {
          const SyntheticView v = render_synthetic(painted, poses[i], floor);
          write_rgb_png(out / ("view_" + pad_index(i) + ".png"), v.image);
          write_mask_png(out / ("mask_" + pad_index(i) + ".png"), v.mask);
        }
        save_poses_json(out / "poses.json", poses);
        std::cout << poses.size() << " synthetic views -> " << render_out << '\n';
      } else {
        LoadedRun run = load_run(run_dir, render_flags);
        std::vector<CameraPose> poses;
        if (!poses_path.empty()) {
          poses = load_poses_json(poses_path);
        } else {
          for (std::size_t v = 0; v < run.views.size(); ++v) poses.push_back(optimized_pose(run.state, run.views, v));
        }
        fs::create_directories(out);
        const RenderConfig rc = render_config(run.config, run.config.total_iterations(), true);
        for (std::size_t i = 0; i < poses.size(); ++i) {
          write_rgb_png(out / ("render_" + pad_index(i) + ".png"),
                        render_image(run.state.fields, poses[i], {run.config.near, run.config.far}, rc,
                                     run.config.samples));
        }
        std::cout << poses.size() << " renders -> " << render_out << '\n';
      }
    } else if (*ev) {
      LoadedRun run = load_run(run_dir, eval_flags);
      const auto held = split_list(heldout_images);
      std::vector<HeldoutView> heldout;
      if (!held.empty()) {
        if (heldout_poses.empty()) throw UsageError("--heldout-images needs --heldout-poses");
        const auto hp = load_poses_json(heldout_poses);
        if (hp.size() != held.size()) throw UsageError("held-out image and pose counts differ");
        for (std::size_t i = 0; i < held.size(); ++i) {
          heldout.push_back({fs::path(held[i]).stem().string(), read_rgb_png(held[i]), hp[i]});
        }
      }
      EvalOptions opts;
      if (!gt_poses.empty()) opts.gt_train_poses = load_poses_json(gt_poses);
      if (!lpips_csv.empty()) opts.lpips = read_lpips_csv(lpips_csv);
      opts.refine_iterations = refine;
      opts.refine_seed = seed;
      opts.out_dir = eval_out;
      const EvalReport rep = evaluate_run(run.state, run.views, heldout, run.config, opts);
      for (const auto& r : rep.rows) std::cout << r.view << " psnr " << r.psnr << " ssim " << r.ssim << '\n';
      if (rep.pose_errors) {
        std::cout << "pose rotation_deg " << rep.pose_errors->rotation_deg << " translation_x100 "
                  << rep.pose_errors->translation_x100 << '\n';
      }
    }
  } catch (const UsageError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return e.kind() == ErrorKind::Divergence ? kExitDivergence : kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: io: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
