// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "cadnerf/autodiff.hpp"
#include "cadnerf/errors.hpp"
#include "cadnerf/evalkit.hpp"
#include "cadnerf/library.hpp"
#include "cadnerf/mesh.hpp"
#include "cadnerf/render.hpp"
#include "cadnerf/retrieval.hpp"
#include "cadnerf/shapes.hpp"
#include "cadnerf/synth.hpp"
#include "cadnerf/trainer.hpp"
#include "oracles.hpp"

using namespace cadnerf;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

constexpr double kDeg = 180.0 / std::numbers::pi;

// ---------------------------------------------------------------------------
// 1. Backtracking optimality

Outcome backtracking_optimality() {
  Stopwatch clock;
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> view_count(3, 6), cand_count(5, 10), pose(0, 99);
  std::uniform_real_distribution<double> iou(1e-3, 1.0);
  int mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    CandidateTable t;
    const int views = view_count(rng);
    for (int v = 0; v < views; ++v) {
      std::vector<Candidate> c;
      const int n = cand_count(rng);
      for (int k = 0; k < n; ++k) c.push_back({pose(rng), iou(rng)});
      t.views.push_back(std::move(c));
    }
    const auto r = backtrack_assign(t);
    if (!r || r->total_score != oracle::exhaustive_best(t)) ++mismatches;
  }
  const double s = clock.seconds();
  return {mismatches == 0 && s < 5.0, fmt("%d/200 tables differ from exhaustive search, %.2f s", mismatches, s)};
}

// ---------------------------------------------------------------------------
// 2. Occupancy oracle

// Exact membership for a convex closed mesh: inside every face plane.
bool inside_convex(const TriangleMesh& mesh, const Eigen::Vector3d& p) {
  for (const auto& t : mesh.triangles) {
    const Eigen::Vector3d& a = mesh.vertices[t[0]];
    const Eigen::Vector3d n = (mesh.vertices[t[1]] - a).cross(mesh.vertices[t[2]] - a);
    if (n.dot(p - a) > 0.0) return false;
  }
  return true;
}

Outcome occupancy_oracle() {
  Stopwatch clock;
  struct Case {
    const char* name;
    TriangleMesh mesh;
    std::function<bool(const TriangleMesh&, const Eigen::Vector3d&)> truth;
  };
  const auto by_winding = [](const TriangleMesh& m, const Eigen::Vector3d& p) {
    return std::abs(oracle::winding_number(m, p)) > 0.5;
  };
  std::vector<Case> cases{{"cube", shapes::cuboid(), inside_convex},
                          {"icosphere", shapes::icosphere(3), inside_convex},
                          {"torus", shapes::torus(), by_winding}};
  const auto dirs = parity_directions(3);
  std::string detail;
  bool pass = true;
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-0.75, 0.75);
  for (const auto& c : cases) {
    int checked = 0, agree = 0;
    while (checked < 10000) {
      const Eigen::Vector3d p(u(rng), u(rng), u(rng));
      if (distance_to_surface(c.mesh, p) < 1e-5) continue;
      ++checked;
      agree += (occupancy(c.mesh, OccupancyQuery{p, dirs}) == 1) == c.truth(c.mesh, p);
    }
    pass = pass && agree == checked;
    detail += fmt("%s %d/%d, ", c.name, agree, checked);
  }
  const double s = clock.seconds();
  pass = pass && s < 10.0;
  return {pass, detail + fmt("%.2f s", s)};
}

// ---------------------------------------------------------------------------
// 3. Analytic volume rendering

Outcome analytic_rendering() {
  // Constant field restricted to t in [0, ln 2] along a ray of unit speed.
  const double len = std::log(2.0);
  std::vector<Ray> rays{Ray{Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitX(), 0.0, len}};
  const RaySampleBatch batch = sample_along_rays(rays, 256, false, 0);
  const RayTensors rt = ray_tensors(rays);
  const FieldFn slab = [](const ad::Tensor& pts, const ad::Tensor&) {
    return FieldSample{ad::Tensor::constant(ad::Matrix::Ones(pts.rows(), 1)),
                       ad::Tensor::constant(ad::Matrix::Ones(pts.rows(), 3)), {}, {}};
  };
  const FieldFn empty = [](const ad::Tensor& pts, const ad::Tensor&) {
    return FieldSample{ad::Tensor::constant(ad::Matrix::Zero(pts.rows(), 1)),
                       ad::Tensor::constant(ad::Matrix::Constant(pts.rows(), 3, 0.7)), {}, {}};
  };
  const ad::Matrix c = render_field(batch, rt, slab, 1.0).rgb.value();
  const ad::Matrix e = render_field(batch, rt, empty, 1.0).rgb.value();
  const double err = (c.array() - 0.5).abs().maxCoeff();
  const bool black = (e.array() == 0.0).all();
  return {err < 1e-3 && black, fmt("slab max error %.2e, empty field exactly black: %s", err, black ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 4. End-to-end gradient check

// True when some kinked op on the tape has an input within `margin` of its kink.
bool near_kink(const ad::Tensor& loss, double margin) {
  std::vector<const ad::Node*> stack{loss.node().get()};
  std::vector<const ad::Node*> seen;
  while (!stack.empty()) {
    const ad::Node* n = stack.back();
    stack.pop_back();
    if (std::find(seen.begin(), seen.end(), n) != seen.end()) continue;
    seen.push_back(n);
    const std::string op = n->op;
    if (!n->inputs.empty()) {
      const ad::Matrix& x = n->inputs[0]->value;
      if (op == "relu" || op == "abs") {
        if ((x.array().abs() < margin).any()) return true;
      } else if (op == "clamp") {
        // Clamps in the pipeline sit at 0, 1 and a small epsilon above 0 / below 1.
        for (double k : {0.0, 1.0, 1e-7, 1.0 - 1e-7}) {
          if (((x.array() - k).abs() < margin).any()) return true;
        }
      } else if (op == "row_norm") {
        if ((x.rowwise().norm().array() < margin).any()) return true;
      }
    }
    for (const auto& in : n->inputs) stack.push_back(in.get());
  }
  return false;
}

Outcome gradient_check() {
  TrainConfig cfg = desk_preset(2000);
  cfg.hidden = 16;
  cfg.feature = 8;
  cfg.deform_hidden = 8;
  cfg.color_hidden = 8;
  cfg.resnet_blocks = 1;
  cfg.scene_extent = 0.0;
  RenderConfig rc;
  rc.density_scale = cfg.density_scale;
  rc.alpha = cfg.position_frequencies;
  rc.mode = DeformMode::Learned;
  rc.with_color = true;

  const CameraPose pose = look_at({1.6, 0.9, 0.7}, {0, 0, 0}, library_focal(32, 2.0), 32, 32);
  const std::vector<Eigen::Vector2d> pixels{{10.5, 12.5}, {16.5, 16.5}, {20.5, 9.5}, {14.5, 21.5}};
  const ad::Matrix target = ad::Matrix::Constant(4, 3, 0.35);

  for (std::uint64_t seed = 1; seed < 40; ++seed) {
    FieldConfig fc;
    fc.hidden = cfg.hidden;
    fc.feature = cfg.feature;
    fc.deform_hidden = cfg.deform_hidden;
    fc.color_hidden = cfg.color_hidden;
    fc.resnet_blocks = cfg.resnet_blocks;
    EncodingConfig ec;
    ec.position_frequencies = cfg.position_frequencies;
    ec.direction_frequencies = cfg.direction_frequencies;
    ec.alpha = cfg.position_frequencies;
    FieldParams fields = FieldParams::create(fc, ec, seed);
    // A fresh deformation net outputs zeros; perturb its last layer so offset
    // and correction carry gradient.
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 0.05);
    for (auto* t : {&fields.deform_layers.back().weight, &fields.deform_layers.back().bias}) {
      for (Eigen::Index i = 0; i < t->value().size(); ++i) t->mutable_value().data()[i] = g(rng);
    }
    ad::Tensor update = ad::Tensor::parameter(ad::Matrix::Zero(1, 6));
    for (int k = 0; k < 6; ++k) update.mutable_value()(0, k) = g(rng);

    const auto loss = [&] {
      const RayTensors rt = pose_rays(pose, update, pixels);
      std::vector<Ray> bounds;
      for (Eigen::Index i = 0; i < rt.origins.rows(); ++i) {
        bounds.push_back(Ray{rt.origins.value().row(i).transpose(), rt.directions.value().row(i).transpose(),
                             cfg.near, cfg.far});
      }
      const RaySampleBatch batch = sample_along_rays(std::move(bounds), 24, false, 0);
      const RenderOutput out = render_rays(batch, rt, fields, rc);
      const auto [lo, lc] = loss_regularizers(out.offsets, out.corrections);
      return loss_total(loss_color(out.rgb, target), lo, lc, cfg.lambda_a, cfg.lambda_b);
    };

    const ad::Tensor l = loss();
    if (near_kink(l, 1e-4)) continue;
    for (auto& [name, t] : fields.all_parameters()) t.zero_grad();
    update.zero_grad();
    ad::backward(l);

    // 100 coordinates: one pose update entry per axis pair plus a spread over
    // the density, deformation and color networks.
    std::vector<std::pair<ad::Tensor, Eigen::Index>> coords;
    for (Eigen::Index k = 0; k < 6; ++k) coords.emplace_back(update, k);
    const char* nets[] = {"density", "deform", "color"};
    std::uniform_int_distribution<int> pick_net(0, 2);
    while (coords.size() < 100) {
      const auto params = fields.parameters(nets[pick_net(rng)]);
      std::uniform_int_distribution<std::size_t> pick_param(0, params.size() - 1);
      ad::Tensor t = params[pick_param(rng)].second;
      std::uniform_int_distribution<Eigen::Index> pick_entry(0, t.value().size() - 1);
      coords.emplace_back(t, pick_entry(rng));
    }

    double worst = 0.0;
    bool kinked = false;
    for (auto& [t, i] : coords) {
      const double h = 1e-5, orig = t.value().data()[i];
      t.mutable_value().data()[i] = orig + h;
      const ad::Tensor up = loss();
      t.mutable_value().data()[i] = orig - h;
      const ad::Tensor down = loss();
      t.mutable_value().data()[i] = orig;
      if (near_kink(up, 1e-6) || near_kink(down, 1e-6)) {
        kinked = true;
        break;
      }
      const double fd = (up.item() - down.item()) / (2 * h);
      const double an = t.grad().data()[i];
      worst = std::max(worst, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6}));
    }
    if (kinked) continue;
    return {worst < 1e-3, fmt("100 coordinates over 3 networks and the pose update, max relative error %.2e (draw %d)",
                              worst, static_cast<int>(seed))};
  }
  return {false, "every draw landed near a kink"};
}

// ---------------------------------------------------------------------------
// 5. Self-retrieval pose accuracy

Outcome self_retrieval() {
  Stopwatch clock;
  std::vector<std::pair<std::string, TriangleMesh>> models;
  for (const char* n : {"cuboid", "sphere", "cylinder", "torus", "lamp"}) models.emplace_back(n, shapes::by_name(n));
  const Library lib = build_library(models, LibrarySampling{100, 2.0, 128});
  const LibraryEntry& lamp = lib.entry("lamp");
  std::mt19937_64 rng(515);
  std::normal_distribution<double> g(0.0, 1.0);
  int correct = 0;
  double err_sum = 0.0;
  int err_count = 0;
  for (int i = 0; i < 20; ++i) {
    const Eigen::Vector3d dir = Eigen::Vector3d(g(rng), g(rng), g(rng)).normalized();
    const CameraPose truth = look_at(dir * 2.0, {0, 0, 0}, library_focal(128, 2.0), 128, 128);
    const std::vector<MaskRaster> q{render_silhouette(lamp.mesh, truth).mask};
    const RetrievalResult r = retrieve(q, lib, {});
    if (r.model_id != "lamp") continue;
    ++correct;
    for (const auto& a : r.assignments) {
      err_sum += rotation_angle_between(lamp.poses[static_cast<std::size_t>(a.pose_index)].rotation, truth.rotation);
      ++err_count;
    }
  }
  const double mean_err = err_count ? err_sum / err_count * kDeg : 180.0;
  const double s = clock.seconds();
  return {correct >= 19 && mean_err <= 15.0 && s < 60.0,
          fmt("lamp chosen %d/20, mean pose error %.2f deg, %.1f s", correct, mean_err, s)};
}

// ---------------------------------------------------------------------------
// 6, 8, 10. Toy reconstruction scene

CameraPose orbit_pose(double az, double el) {
  return look_at(oracle::orbit_center(az, el, 2.0), {0, 0, 0}, library_focal(64, 2.0), 64, 64);
}

struct ToyScene {
  Library library;
  PipelineInput input;
  std::vector<CameraPose> gt_poses;
  std::vector<HeldoutView> heldout;
};

ToyScene make_toy_scene() {
  ToyScene s;
  std::vector<std::pair<std::string, TriangleMesh>> models;
  for (const char* n : {"cuboid", "sphere", "cylinder", "torus"}) models.emplace_back(n, shapes::by_name(n));
  s.library = build_library(models, LibrarySampling{});
  const ColoredMesh object = paint_by_normal(shapes::cuboid(1.0, 0.75, 0.5), default_palette());
  for (double az : {-150.0, -60.0, 30.0}) {
    const CameraPose p = orbit_pose(az, 30.0);
    const SyntheticView v = render_synthetic(object, p);
    s.input.images.push_back(v.image);
    s.input.masks.push_back(v.mask);
    s.gt_poses.push_back(p);
  }
  for (double az : {-105.0, -15.0}) {
    const CameraPose p = orbit_pose(az, 22.0);
    s.heldout.push_back({fmt("heldout_%d", static_cast<int>(az)), render_synthetic(object, p).image, p});
  }
  return s;
}

struct ToyRun {
  PipelineResult result;
  EvalReport report;
  double seconds = 0.0;
};

ToyRun run_toy(const ToyScene& scene, const TrainConfig& config) {
  Stopwatch clock;
  ToyRun run;
  run.result = run_full(scene.input, scene.library, config);
  EvalOptions eo;
  std::vector<CameraPose> gt;
  for (int i : run.result.view_indices) gt.push_back(scene.gt_poses[static_cast<std::size_t>(i)]);
  eo.gt_train_poses = gt;
  eo.refine_iterations = 100;
  eo.refine_rays = 128;
  eo.refine_learning_rate = 3e-3;
  run.report = evaluate_run(run.result.state, run.result.views, scene.heldout, config, eo);
  run.seconds = clock.seconds();
  return run;
}

double mean_heldout_psnr(const ToyRun& run) {
  double s = 0.0;
  for (const auto& r : run.report.rows) s += r.psnr;
  return s / static_cast<double>(run.report.rows.size());
}

Outcome toy_reconstruction(const ToyRun& run) {
  double train_min = 1e9, held_min = 1e9;
  for (double p : run.result.train_psnr) train_min = std::min(train_min, p);
  for (const auto& r : run.report.rows) held_min = std::min(held_min, r.psnr);
  const bool all_views = run.result.views.size() == 3 && run.result.retrieval.model_id == "cuboid";
  return {all_views && train_min >= 25.0 && held_min >= 20.0 && run.seconds <= 1800.0,
          fmt("model %s with %d views, min train PSNR %.2f dB, min held-out PSNR %.2f dB (mean %.2f), %.0f s",
              run.result.retrieval.model_id.c_str(), static_cast<int>(run.result.views.size()), train_min, held_min,
              mean_heldout_psnr(run), run.seconds)};
}

// ---------------------------------------------------------------------------
// 7. Pose refinement

Outcome pose_refinement() {
  Stopwatch clock;
  const TriangleMesh cube = shapes::by_name("cube");
  const ColoredMesh painted = paint_by_normal(cube, default_palette());
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<TrainView> views;
  std::vector<CameraPose> gt, perturbed;
  const double az[] = {-140, -70, 0, 70, 140};
  for (int i = 0; i < 5; ++i) {
    const CameraPose p = orbit_pose(az[i], i % 2 ? 35.0 : 20.0);
    const SyntheticView v = render_synthetic(painted, p);
    views.push_back(TrainView{v.image, v.mask, p});
    gt.push_back(p);
    PoseUpdate u;
    u.axis_angle = Eigen::Vector3d(g(rng), g(rng), g(rng)).normalized() * (10.0 / kDeg);
    u.delta_t = Eigen::Vector3d(g(rng), g(rng), g(rng)).normalized() * 0.1;
    perturbed.push_back(apply_pose_update(u, p));
  }

  // Fields fitted to the cube: occupancy pretraining, then color at the true
  // cameras with the poses held fixed.
  TrainConfig cfg = desk_preset(2000);
  cfg.use_deformation = false;
  cfg.phase1_iterations = 500;
  cfg.phase2_iterations = 1;
  cfg.phase3_iterations = 500;
  cfg.pose_start = cfg.pose_end = 501;
  TrainState state = make_state(cfg, views.size());
  phase1_pretrain(cube, state, cfg);
  phase3_joint(views, state, cfg);

  for (std::size_t i = 0; i < views.size(); ++i) views[i].init_pose = perturbed[i];
  std::vector<CameraPose> start;
  for (std::size_t i = 0; i < views.size(); ++i) start.push_back(optimized_pose(state, views, i));
  const PoseErrors before = pose_registration_error(start, gt);

  const auto frozen = state.fields.clone().all_parameters();
  cfg.batch_rays = 128;
  optimize_poses_only(views, state, cfg, 1000, true);
  const auto after_fields = state.fields.all_parameters();
  bool fields_untouched = frozen.size() == after_fields.size();
  for (std::size_t i = 0; fields_untouched && i < frozen.size(); ++i) {
    fields_untouched = frozen[i].second.value() == after_fields[i].second.value();
  }
  std::vector<CameraPose> est;
  for (std::size_t i = 0; i < views.size(); ++i) est.push_back(optimized_pose(state, views, i));
  const PoseErrors after = pose_registration_error(est, gt);
  return {fields_untouched && after.rotation_deg < 2.0 && after.translation_x100 < 5.0,
          fmt("rotation %.2f -> %.2f deg, translation(x100) %.2f -> %.2f, fields frozen: %s, %.0f s",
              before.rotation_deg, after.rotation_deg, before.translation_x100, after.translation_x100,
              fields_untouched ? "yes" : "no", clock.seconds())};
}

// ---------------------------------------------------------------------------
// 8. Ablation direction

Outcome ablation(const ToyScene& scene, const ToyRun& full, const TrainConfig& base) {
  TrainConfig no_init = base;
  no_init.use_init = false;
  // Keep the first run's files intact for the determinism comparison.
  const fs::path no_init_dir = fs::path(base.loss_csv).parent_path().parent_path() / "no_init";
  no_init.checkpoint_dir = (no_init_dir / "checkpoints").string();
  no_init.loss_csv = (no_init_dir / "loss.csv").string();
  const ToyRun ablated = run_toy(scene, no_init);
  const double drop = mean_heldout_psnr(full) - mean_heldout_psnr(ablated);

  // Deformation disabled versus the zero-wired deformation net, on the same
  // trained fields and every held-out camera.
  TrainConfig off = base;
  off.use_deformation = false;
  RenderConfig rc_off = render_config(off, off.total_iterations(), true);
  RenderConfig rc_zero = rc_off;
  rc_zero.mode = DeformMode::ZeroWired;
  bool identical = true;
  for (const auto& h : scene.heldout) {
    const RgbImage a = render_image(full.result.state.fields, h.pose, {off.near, off.far}, rc_off, off.samples);
    const RgbImage b = render_image(full.result.state.fields, h.pose, {off.near, off.far}, rc_zero, off.samples);
    identical = identical && a.data == b.data;
  }
  return {drop >= 1.0 && identical,
          fmt("held-out PSNR full %.2f dB vs without initialization %.2f dB (drop %.2f), "
              "disabled vs zero-wired deformation bit-identical: %s",
              mean_heldout_psnr(full), mean_heldout_psnr(ablated), drop, identical ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 9. Loss values

Outcome loss_values() {
  const double l3 = loss_density(ad::Tensor::constant(ad::Matrix::Constant(1, 1, 0.5)),
                                 ad::Matrix::Ones(1, 1)).item();
  ad::Matrix offs(1, 3);
  offs << 3, 4, 0;
  ad::Matrix corr(2, 1);
  corr << -1, 2;
  const auto [lo, lc] = loss_regularizers(ad::Tensor::constant(offs), ad::Tensor::constant(corr));
  const double total =
      loss_total(ad::Tensor::scalar(1.0), ad::Tensor::scalar(0.2), ad::Tensor::scalar(0.5), 10.0, 0.1).item();
  const double avg = average_metric(20.0, 0.91, 0.1);
  const bool pass = std::abs(l3 - std::log(2.0)) < 1e-9 && lo.item() == 5.0 && lc.item() == 1.5 &&
                    std::abs(total - 3.05) < 1e-12 && std::abs(avg - 0.0669) < 1e-4;
  return {pass, fmt("density %.12f, regularizers (%.3f, %.3f), total %.4f, average %.5f", l3, lo.item(), lc.item(),
                    total, avg)};
}

// ---------------------------------------------------------------------------
// 10. Determinism

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism(const ToyScene& scene, const TrainConfig& base, const fs::path& first_dir) {
  TrainConfig again = base;
  const fs::path second_dir = first_dir.parent_path() / "second";
  again.checkpoint_dir = (second_dir / "checkpoints").string();
  again.loss_csv = (second_dir / "loss.csv").string();
  run_full(scene.input, scene.library, again);
  int compared = 0, differing = 0;
  for (const auto& entry : fs::directory_iterator(first_dir / "checkpoints")) {
    ++compared;
    const fs::path other = second_dir / "checkpoints" / entry.path().filename();
    if (!fs::exists(other) || file_bytes(entry.path()) != file_bytes(other)) ++differing;
  }
  const bool csv_same = file_bytes(first_dir / "loss.csv") == file_bytes(second_dir / "loss.csv") &&
                        !file_bytes(first_dir / "loss.csv").empty();
  return {csv_same && compared == 3 && differing == 0,
          fmt("loss CSV identical: %s, %d/%d checkpoints identical", csv_same ? "yes" : "no", compared - differing,
              compared)};
}

std::vector<int> g_selected;  // empty: every criterion

bool report(int id, const char* name, const std::function<Outcome()>& check) {
  if (!g_selected.empty() && std::find(g_selected.begin(), g_selected.end(), id) == g_selected.end()) return true;
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): " << o.detail << std::endl;
  return o.pass;
}

}  // namespace

// Optional arguments restrict the run to the listed criterion numbers.
int main(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) g_selected.push_back(std::atoi(argv[i]));
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  const fs::path work = fs::temp_directory_path() / "cadnerf_acceptance";
  fs::remove_all(work);
  bool all = true;
  all &= report(1, "backtracking optimality", backtracking_optimality);
  all &= report(2, "occupancy oracle", occupancy_oracle);
  all &= report(3, "analytic volume rendering", analytic_rendering);
  all &= report(4, "end-to-end gradient check", gradient_check);
  all &= report(5, "self-retrieval pose accuracy", self_retrieval);

  // Criteria 6, 8 and 10 share one scene and the first training run.
  std::optional<ToyScene> scene;
  std::optional<ToyRun> full;
  TrainConfig base = desk_preset(2000);
  const fs::path first_dir = work / "first";
  base.checkpoint_dir = (first_dir / "checkpoints").string();
  base.loss_csv = (first_dir / "loss.csv").string();
  const auto ensure_full = [&] {
    if (full) return;
    scene = make_toy_scene();
    full = run_toy(*scene, base);
  };
  all &= report(6, "toy end-to-end reconstruction", [&] {
    ensure_full();
    return toy_reconstruction(*full);
  });
  all &= report(7, "pose refinement", pose_refinement);
  all &= report(8, "ablation direction", [&] {
    ensure_full();
    return ablation(*scene, *full, base);
  });
  all &= report(9, "loss values", loss_values);
  all &= report(10, "determinism", [&] {
    ensure_full();
    return determinism(*scene, base, first_dir);
  });
  fs::remove_all(work);
  return all ? 0 : 1;
}
