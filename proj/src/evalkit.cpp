#include "cadnerf/evalkit.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "cadnerf/errors.hpp"
#include "cadnerf/trainer.hpp"

namespace cadnerf {

namespace {

void check_same_size(const RgbImage& a, const RgbImage& b) {
  if (a.width != b.width || a.height != b.height || a.data.size() != b.data.size()) {
    fail(ErrorKind::Dimension, "images differ in size");
  }
  if (a.data.empty()) fail(ErrorKind::InvalidInput, "empty image");
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

double psnr(const RgbImage& a, const RgbImage& b) {
  check_same_size(a, b);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(a.data.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

double ssim(const RgbImage& a, const RgbImage& b) {
  check_same_size(a, b);
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  if (a.width < kWin || a.height < kWin) {
    fail(ErrorKind::ImageTooSmall, "SSIM needs images of at least 11x11 pixels");
  }
  double g[kWin];
  double norm = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double x = i - kWin / 2;
    g[i] = std::exp(-x * x / (2.0 * kSigma * kSigma));
    norm += g[i];
  }
  for (double& v : g) v /= norm;

  const int w = a.width, h = a.height;
  const int ow = w - kWin + 1, oh = h - kWin + 1;
  double total = 0.0;
  std::vector<double> fa(static_cast<std::size_t>(w) * h), fb(fa.size());
  // Separable blur with a valid-only output, applied to one plane.
  auto blur = [&](const std::vector<double>& src) {
    std::vector<double> tmp(static_cast<std::size_t>(ow) * h), out(static_cast<std::size_t>(ow) * oh);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < ow; ++x) {
        double s = 0.0;
        for (int k = 0; k < kWin; ++k) s += g[k] * src[static_cast<std::size_t>(y) * w + x + k];
        tmp[static_cast<std::size_t>(y) * ow + x] = s;
      }
    }
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double s = 0.0;
        for (int k = 0; k < kWin; ++k) s += g[k] * tmp[static_cast<std::size_t>(y + k) * ow + x];
        out[static_cast<std::size_t>(y) * ow + x] = s;
      }
    }
    return out;
  };
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < fa.size(); ++i) {
      fa[i] = a.data[i * 3 + c];
      fb[i] = b.data[i * 3 + c];
    }
    std::vector<double> aa(fa.size()), bb(fa.size()), ab(fa.size());
    for (std::size_t i = 0; i < fa.size(); ++i) {
      aa[i] = fa[i] * fa[i];
      bb[i] = fb[i] * fb[i];
      ab[i] = fa[i] * fb[i];
    }
    const auto ma = blur(fa), mb = blur(fb), saa = blur(aa), sbb = blur(bb), sab = blur(ab);
    double sum = 0.0;
    for (std::size_t i = 0; i < ma.size(); ++i) {
      const double va = saa[i] - ma[i] * ma[i];
      const double vb = sbb[i] - mb[i] * mb[i];
      const double cov = sab[i] - ma[i] * mb[i];
      sum += ((2.0 * ma[i] * mb[i] + c1) * (2.0 * cov + c2)) /
             ((ma[i] * ma[i] + mb[i] * mb[i] + c1) * (va + vb + c2));
    }
    total += sum / static_cast<double>(ma.size());
  }
  return total / 3.0;
}

double average_metric(double psnr_db, double ssim_value, double lpips) {
  if (ssim_value >= 1.0) return 0.0;
  if (!(lpips > 0.0 && lpips <= 1.0)) fail(ErrorKind::InvalidInput, "lpips must lie in (0,1]");
  const double mse = std::pow(10.0, -psnr_db / 10.0);
  return std::cbrt(mse * std::sqrt(1.0 - ssim_value) * lpips);
}

std::vector<CameraPose> align_poses(std::span<const CameraPose> gt_train, std::span<const CameraPose> learned_train,
                                    std::span<const CameraPose> gt_other) {
  std::vector<Eigen::Vector3d> from, to;
  for (const auto& p : gt_train) from.push_back(p.center);
  for (const auto& p : learned_train) to.push_back(p.center);
  const Similarity sim = fit_similarity(from, to);
  std::vector<CameraPose> out;
  for (const auto& p : gt_other) out.push_back(sim.apply(p));
  return out;
}

CameraPose refine_pose(const TrainState& state, const TrainConfig& config, const RgbImage& image,
                       const CameraPose& pose, int iterations, int rays, double learning_rate, std::uint64_t seed) {
  if (image.width != pose.width || image.height != pose.height) fail(ErrorKind::Dimension, "image and camera differ");
  if (iterations <= 0) return pose;
  ad::Tensor update = ad::Tensor::parameter(ad::Matrix::Zero(1, 6));
  ad::AdamConfig ac;
  ac.learning_rate = learning_rate;
  ad::Adam adam(ac);
  adam.add("pose", update);
  const RenderConfig rc = render_config(config, config.total_iterations(), true);
  std::mt19937_64 rng(seed);
  const int total = image.width * image.height;
  std::uniform_int_distribution<int> pick(0, total - 1);
  for (int it = 0; it < iterations; ++it) {
    std::vector<Eigen::Vector2d> pixels;
    ad::Matrix target(rays, 3);
    for (int r = 0; r < rays; ++r) {
      const int p = pick(rng);
      pixels.emplace_back(p % image.width + 0.5, p / image.width + 0.5);
      for (int c = 0; c < 3; ++c) target(r, c) = image.data[static_cast<std::size_t>(p) * 3 + c];
    }
    const RayTensors rt = pose_rays(pose, update, pixels);
    std::vector<Ray> bounds;
    for (Eigen::Index i = 0; i < rt.origins.rows(); ++i) {
      bounds.push_back(Ray{rt.origins.value().row(i).transpose(), rt.directions.value().row(i).transpose(),
                           config.near, config.far});
    }
    const RaySampleBatch batch = sample_along_rays(std::move(bounds), config.samples, false, 0);
    const RenderOutput out = render_rays(batch, rt, state.fields, rc);
    adam.zero_grad();
    ad::backward(loss_color(out.rgb, target));
    adam.step();
  }
  // The backward sweeps also reached the frozen field parameters.
  for (auto [name, t] : state.fields.all_parameters()) t.zero_grad();
  const ad::Matrix& u = update.value();
  PoseUpdate pu;
  pu.axis_angle = Eigen::Vector3d(u(0, 0), u(0, 1), u(0, 2));
  pu.delta_t = Eigen::Vector3d(u(0, 3), u(0, 4), u(0, 5));
  return apply_pose_update(pu, pose);
}

EvalReport evaluate_run(const TrainState& state, const std::vector<TrainView>& views,
                        const std::vector<HeldoutView>& heldout, const TrainConfig& config,
                        const EvalOptions& options) {
  EvalReport report;
  std::vector<CameraPose> learned;
  for (std::size_t v = 0; v < views.size(); ++v) learned.push_back(optimized_pose(state, views, v));

  std::vector<CameraPose> render_poses;
  for (const auto& h : heldout) render_poses.push_back(h.pose);
  if (options.gt_train_poses) {
    if (options.gt_train_poses->size() != learned.size()) {
      fail(ErrorKind::InvalidInput, "ground-truth pose count does not match training views");
    }
    report.pose_errors = pose_registration_error(learned, *options.gt_train_poses);
    if (options.align_heldout && !render_poses.empty()) {
      render_poses = align_poses(*options.gt_train_poses, learned, render_poses);
    }
  }

  const RenderConfig rc = render_config(config, config.total_iterations(), true);
  for (std::size_t i = 0; i < heldout.size(); ++i) {
    if (options.refine_iterations > 0) {
      render_poses[i] = refine_pose(state, config, heldout[i].image, render_poses[i], options.refine_iterations,
                                    options.refine_rays, options.refine_learning_rate, options.refine_seed + i);
    }
    RgbImage img = render_image(state.fields, render_poses[i], {config.near, config.far}, rc, config.samples);
    MetricsRow row;
    row.view = heldout[i].name;
    row.psnr = psnr(img, heldout[i].image);
    row.ssim = ssim(img, heldout[i].image);
    if (auto it = options.lpips.find(row.view); it != options.lpips.end()) {
      row.lpips = it->second;
      row.average = average_metric(row.psnr, row.ssim, it->second);
    }
    report.rows.push_back(row);
    report.renders.push_back(std::move(img));
  }

  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    write_metrics_csv(options.out_dir / "metrics.csv", report.rows);
    if (report.pose_errors) write_pose_errors_csv(options.out_dir / "pose_errors.csv", *report.pose_errors);
    for (std::size_t i = 0; i < report.renders.size(); ++i) {
      write_rgb_png(options.out_dir / ("render_" + heldout[i].name + ".png"), report.renders[i]);
    }
  }
  return report;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << "# average is computed per view, then averaged in the mean row\n";
  out << "view,psnr,ssim,lpips,average\n";
  double sp = 0.0, ss = 0.0, sl = 0.0, sa = 0.0;
  std::size_t nl = 0;
  for (const auto& r : rows) {
    out << r.view << ',' << fmt(r.psnr) << ',' << fmt(r.ssim) << ',' << (r.lpips ? fmt(*r.lpips) : "") << ','
        << (r.average ? fmt(*r.average) : "") << '\n';
    sp += r.psnr;
    ss += r.ssim;
    if (r.lpips && r.average) {
      sl += *r.lpips;
      sa += *r.average;
      ++nl;
    }
  }
  if (!rows.empty()) {
    const double n = static_cast<double>(rows.size());
    const bool all = nl == rows.size();
    out << "mean," << fmt(sp / n) << ',' << fmt(ss / n) << ',' << (all ? fmt(sl / n) : "") << ','
        << (all ? fmt(sa / n) : "") << '\n';
  }
  if (!out) fail(ErrorKind::Io, "failed writing " + path.string());
}

void write_pose_errors_csv(const std::filesystem::path& path, const PoseErrors& errors) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << "rotation_deg,translation_x100\n" << fmt(errors.rotation_deg) << ',' << fmt(errors.translation_x100) << '\n';
}

std::map<std::string, double> read_lpips_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::map<std::string, double> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      fail(ErrorKind::Format, path.string() + ":" + std::to_string(number) + ": expected 'view,lpips'");
    }
    const std::string view = line.substr(0, comma);
    const std::string value = line.substr(comma + 1);
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (end == value.c_str() || *end != '\0') {
      if (number == 1) continue;  // header
      fail(ErrorKind::Format, path.string() + ":" + std::to_string(number) + ": bad lpips value");
    }
    out[view] = v;
  }
  return out;
}

}  // namespace cadnerf
