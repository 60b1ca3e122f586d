#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "cadnerf/errors.hpp"
#include "cadnerf/evalkit.hpp"
#include "cadnerf/shapes.hpp"
#include "cadnerf/synth.hpp"
#include "cadnerf/trainer.hpp"
#include "oracles.hpp"

using namespace cadnerf;
namespace fs = std::filesystem;

namespace {

RgbImage constant_image(int w, int h, double v) {
  RgbImage img(w, h);
  std::fill(img.data.begin(), img.data.end(), v);
  return img;
}

RgbImage random_image(int w, int h, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RgbImage img(w, h);
  for (double& v : img.data) v = u(rng);
  return img;
}

// Direct per-window SSIM: weighted moments of every fully interior 11x11
// window, one channel at a time.
double ssim_oracle(const RgbImage& a, const RgbImage& b) {
  double w[11][11], norm = 0.0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) norm += w[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0;
    int count = 0;
    for (int y0 = 0; y0 + 11 <= a.height; ++y0) {
      for (int x0 = 0; x0 + 11 <= a.width; ++x0) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = 0; i < 11; ++i) {
          for (int j = 0; j < 11; ++j) {
            const double k = w[i][j] / norm;
            const double va = a.pixel(x0 + j, y0 + i)(c), vb = b.pixel(x0 + j, y0 + i)(c);
            ma += k * va;
            mb += k * vb;
            saa += k * va * va;
            sbb += k * vb * vb;
            sab += k * va * vb;
          }
        }
        const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
        sum += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
    }
    total += sum / count;
  }
  return total / 3.0;
}

}  // namespace

TEST_CASE("PSNR values") {
  const RgbImage a = constant_image(8, 8, 0.5);
  CHECK(psnr(a, a) == 99.0);
  CHECK(psnr(a, constant_image(8, 8, 0.6)) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(psnr(a, constant_image(8, 8, 0.5 + std::sqrt(0.001))) == doctest::Approx(30.0).epsilon(1e-12));
  std::mt19937_64 rng(1);
  const RgbImage x = random_image(9, 7, rng), y = random_image(9, 7, rng);
  CHECK(psnr(x, y) == psnr(y, x));
  CHECK_THROWS_AS(psnr(a, constant_image(8, 9, 0.5)), Error);
}

TEST_CASE("SSIM of identical images is one") {
  std::mt19937_64 rng(2);
  const RgbImage a = random_image(20, 16, rng);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("SSIM matches a direct windowed computation") {
  std::mt19937_64 rng(3);
  const RgbImage a = random_image(17, 13, rng), b = random_image(17, 13, rng);
  CHECK(ssim(a, b) == doctest::Approx(ssim_oracle(a, b)).epsilon(1e-10));
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
}

TEST_CASE("a checkerboard against its negative has very low SSIM") {
  RgbImage a(24, 24), b(24, 24);
  for (int y = 0; y < 24; ++y) {
    for (int x = 0; x < 24; ++x) {
      const double v = ((x / 2 + y / 2) % 2) ? 0.9 : 0.1;
      a.set_pixel(x, y, Eigen::Vector3d::Constant(v));
      b.set_pixel(x, y, Eigen::Vector3d::Constant(1.0 - v));
    }
  }
  CHECK(ssim(a, b) < 0.2);
}

TEST_CASE("constant images reduce to the luminance term") {
  for (auto [p, q] : {std::pair{0.3, 0.7}, std::pair{0.2, 0.8}, std::pair{0.05, 0.5}}) {
    const double closed = (2 * p * q + 1e-4) / (p * p + q * q + 1e-4);
    CHECK(ssim(constant_image(16, 16, p), constant_image(16, 16, q)) == doctest::Approx(closed).epsilon(1e-12));
  }
}

TEST_CASE("SSIM needs at least an 11x11 image") {
  try {
    ssim(constant_image(10, 30, 0.1), constant_image(10, 30, 0.1));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ImageTooSmall);
  }
}

TEST_CASE("average metric") {
  // (0.01 * 0.3 * 0.1)^(1/3)
  CHECK(std::abs(average_metric(20.0, 0.91, 0.1) - 0.0669433) < 1e-4);
  const double base = average_metric(25.0, 0.8, 0.2);
  CHECK(average_metric(25.0, 0.8, 0.2 / 8.0) == doctest::Approx(base / 2.0).epsilon(1e-12));
  CHECK(average_metric(99.0, 1.0, 0.3) == 0.0);
  CHECK(average_metric(21.0, 0.8, 0.2) < average_metric(20.0, 0.8, 0.2));
  CHECK(average_metric(20.0, 0.85, 0.2) < average_metric(20.0, 0.8, 0.2));
  CHECK(average_metric(20.0, 0.8, 0.1) < average_metric(20.0, 0.8, 0.2));
  CHECK_THROWS_AS(average_metric(20.0, 0.8, 0.0), Error);
}

TEST_CASE("evaluating a run") {
  TrainConfig c = desk_preset(40);
  c.hidden = 16;
  c.feature = 8;
  c.deform_hidden = 8;
  c.color_hidden = 8;
  c.samples = 8;
  const ColoredMesh painted = paint_by_normal(shapes::cuboid(), default_palette());
  std::vector<TrainView> views;
  std::vector<CameraPose> gt;
  for (double az : {-90.0, 0.0, 90.0}) {
    const CameraPose p = look_at(oracle::orbit_center(az, 25.0, 2.0), {0, 0, 0}, library_focal(16, 2.0), 16, 16);
    const SyntheticView v = render_synthetic(painted, p);
    views.push_back(TrainView{v.image, v.mask, p});
    gt.push_back(p);
  }
  const TrainState state = make_state(c, views.size());
  std::vector<HeldoutView> heldout;
  for (double az : {-45.0, 45.0}) {
    const CameraPose p = look_at(oracle::orbit_center(az, 20.0, 2.0), {0, 0, 0}, library_focal(16, 2.0), 16, 16);
    heldout.push_back({"h" + std::to_string(static_cast<int>(az)), render_synthetic(painted, p).image, p});
  }
  const fs::path dir = fs::temp_directory_path() / "cadnerf_eval_test";
  fs::remove_all(dir);
  EvalOptions opt;
  opt.gt_train_poses = gt;
  opt.lpips = {{"h45", 0.25}};
  opt.out_dir = dir;
  const EvalReport r = evaluate_run(state, views, heldout, c, opt);
  REQUIRE(r.rows.size() == heldout.size());
  REQUIRE(r.pose_errors);
  CHECK(std::abs(r.pose_errors->rotation_deg) < 1e-6);
  CHECK(std::abs(r.pose_errors->translation_x100) < 1e-6);
  CHECK_FALSE(r.rows[0].lpips);
  REQUIRE(r.rows[1].average);
  CHECK(*r.rows[1].average == doctest::Approx(average_metric(r.rows[1].psnr, r.rows[1].ssim, 0.25)));

  // With identical frames the aligned held-out camera is the reference one.
  const RgbImage direct = render_image(state.fields, heldout[0].pose, {c.near, c.far},
                                       render_config(c, c.total_iterations(), true), c.samples);
  for (std::size_t i = 0; i < direct.data.size(); ++i) CHECK(r.renders[0].data[i] == doctest::Approx(direct.data[i]));

  CHECK(fs::exists(dir / "metrics.csv"));
  CHECK(fs::exists(dir / "pose_errors.csv"));
  CHECK(fs::exists(dir / "render_h-45.png"));
  std::ifstream in(dir / "pose_errors.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "rotation_deg,translation_x100");
  fs::remove_all(dir);

  opt.gt_train_poses = std::vector<CameraPose>(gt.begin(), gt.begin() + 2);
  opt.out_dir.clear();
  CHECK_THROWS_AS(evaluate_run(state, views, heldout, c, opt), Error);
}

TEST_CASE("zero refinement steps leave the camera alone") {
  const TrainConfig c = desk_preset(40);
  const TrainState state = make_state(c, 1);
  const CameraPose p = look_at({2, 0, 0.5}, {0, 0, 0}, library_focal(16, 2.0), 16, 16);
  const CameraPose q = refine_pose(state, c, RgbImage(16, 16), p, 0, 8, 1e-3, 0);
  CHECK(q.rotation == p.rotation);
  CHECK(q.center == p.center);
}

TEST_CASE("metrics CSV layout and the LPIPS reader") {
  const fs::path dir = fs::temp_directory_path() / "cadnerf_csv_test";
  fs::create_directories(dir);
  write_metrics_csv(dir / "m.csv", {{"a", 20.0, 0.5, 0.1, 0.2}, {"b", 30.0, 0.7, 0.3, 0.4}});
  std::ifstream in(dir / "m.csv");
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  REQUIRE(lines.size() == 5);
  CHECK(lines[1] == "view,psnr,ssim,lpips,average");
  CHECK(lines[4].rfind("mean,25", 0) == 0);

  {
    std::ofstream out(dir / "lp.csv");
    out << "view,lpips\nfront,0.125\nside,0.5\n";
  }
  const auto lp = read_lpips_csv(dir / "lp.csv");
  CHECK(lp.size() == 2);
  CHECK(lp.at("front") == 0.125);
  {
    std::ofstream out(dir / "bad.csv");
    out << "front;0.1\n";
  }
  try {
    read_lpips_csv(dir / "bad.csv");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Format);
    CHECK(std::string(e.what()).find(":1:") != std::string::npos);
  }
  CHECK_THROWS_AS(read_lpips_csv(dir / "missing.csv"), Error);
  fs::remove_all(dir);
}
