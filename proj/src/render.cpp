#include "cadnerf/render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "cadnerf/errors.hpp"

namespace cadnerf {

using ad::Matrix;
using ad::Tensor;
using Eigen::Index;

RaySampleBatch sample_along_rays(std::vector<Ray> rays, int n_samples, bool stratified, std::uint64_t seed) {
  if (n_samples < 2) fail(ErrorKind::InvalidInput, "at least two samples per ray are required");
  RaySampleBatch batch;
  batch.seed = seed;
  batch.ts.resize(static_cast<Index>(rays.size()), n_samples);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const Ray& ray = rays[r];
    if (!(ray.t_far > ray.t_near)) fail(ErrorKind::InvalidInput, "ray bounds must satisfy t_near < t_far");
    const double bin = (ray.t_far - ray.t_near) / n_samples;
    for (int i = 0; i < n_samples; ++i) {
      const double u = stratified ? uni(rng) : 0.5;
      batch.ts(static_cast<Index>(r), i) = ray.t_near + (i + u) * bin;
    }
  }
  batch.rays = std::move(rays);
  return batch;
}

RayTensors ray_tensors(std::span<const Ray> rays) {
  Matrix o(static_cast<Index>(rays.size()), 3), d(static_cast<Index>(rays.size()), 3);
  for (std::size_t i = 0; i < rays.size(); ++i) {
    o.row(static_cast<Index>(i)) = rays[i].origin.transpose();
    d.row(static_cast<Index>(i)) = rays[i].direction.transpose();
  }
  return {Tensor::constant(std::move(o)), Tensor::constant(std::move(d))};
}

namespace {

// Coefficients of exp([w]x) = I + A K + B K^2 as functions of s = |w|^2,
// together with their derivatives in s.
struct ExpCoefficients {
  double a, b, da, db;
};

ExpCoefficients exp_coefficients(double s) {
  ExpCoefficients c{};
  if (s < 1e-2) {
    c.a = 1.0 - s / 6.0 + s * s / 120.0 - s * s * s / 5040.0;
    c.b = 0.5 - s / 24.0 + s * s / 720.0 - s * s * s / 40320.0;
    c.da = -1.0 / 6.0 + s / 60.0 - s * s / 1680.0 + s * s * s / 90720.0;
    c.db = -1.0 / 24.0 + s / 360.0 - s * s / 13440.0 + s * s * s / 907200.0;
  } else {
    const double th = std::sqrt(s);
    const double sn = std::sin(th), cs = std::cos(th);
    c.a = sn / th;
    c.b = (1.0 - cs) / s;
    c.da = (th * cs - sn) / (2.0 * s * th);
    c.db = (th * sn - 2.0 * (1.0 - cs)) / (2.0 * s * s);
  }
  return c;
}

Eigen::Matrix3d skew3(const Eigen::Vector3d& v) {
  Eigen::Matrix3d k;
  k << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return k;
}

}  // namespace

Tensor so3_exp_transposed(const Tensor& axis_angle) {
  if (axis_angle.rows() != 1 || axis_angle.cols() != 3) fail(ErrorKind::Dimension, "axis-angle must be 1x3");
  const Eigen::Vector3d w = axis_angle.value().row(0).transpose();
  const double s = w.squaredNorm();
  const ExpCoefficients c = exp_coefficients(s);
  const Eigen::Matrix3d k = skew3(w);
  const Eigen::Matrix3d e = Eigen::Matrix3d::Identity() + c.a * k + c.b * k * k;
  Matrix out = e.transpose();
  return ad::make_op("so3_exp", std::move(out), {axis_angle}, [w, c, k](ad::Node& self) {
    const Eigen::Matrix3d g = Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(self.grad.data()).transpose();
    const Eigen::Matrix3d k2 = k * k;
    Matrix dw(1, 3);
    for (int j = 0; j < 3; ++j) {
      const Eigen::Matrix3d ej = skew3(Eigen::Vector3d::Unit(j));
      const Eigen::Matrix3d de =
          c.a * ej + c.b * (ej * k + k * ej) + 2.0 * w(j) * (c.da * k + c.db * k2);
      dw(0, j) = g.cwiseProduct(de).sum();
    }
    self.inputs[0]->accumulate(dw);
  });
}

RayTensors pose_rays(const CameraPose& init, const Tensor& update, std::span<const Eigen::Vector2d> pixels) {
  if (update.rows() != 1 || update.cols() != 6) fail(ErrorKind::Dimension, "pose update must be 1x6");
  Matrix local(static_cast<Index>(pixels.size()), 3);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    local.row(static_cast<Index>(i)) = camera_ray_direction(init, pixels[i]).transpose();
  }
  Matrix center = init.center.transpose();
  const Tensor et = so3_exp_transposed(ad::slice_cols(update, 0, 3));
  const Tensor dirs = ad::matmul(Tensor::constant(std::move(local)), et);
  const Tensor origin = ad::matmul(Tensor::constant(std::move(center)), et) + ad::slice_cols(update, 3, 3);
  return {ad::repeat_rows(origin, static_cast<Index>(pixels.size())), dirs};
}

RenderOutput composite(const RaySampleBatch& batch, const Tensor& sigma, const Tensor& rgb, double density_scale) {
  const Index nr = batch.ray_count(), ns = batch.samples();
  if (sigma.rows() != nr * ns || sigma.cols() != 1) fail(ErrorKind::Dimension, "sigma must be (rays*samples) x 1");
  if (rgb.rows() != nr * ns || rgb.cols() != 3) fail(ErrorKind::Dimension, "rgb must be (rays*samples) x 3");
  if (static_cast<Index>(batch.rays.size()) != nr) fail(ErrorKind::Dimension, "batch rays and ts disagree");

  Matrix delta(nr, ns);
  for (Index r = 0; r < nr; ++r) {
    for (Index i = 0; i + 1 < ns; ++i) delta(r, i) = batch.ts(r, i + 1) - batch.ts(r, i);
    delta(r, ns - 1) = batch.rays[static_cast<std::size_t>(r)].t_far - batch.ts(r, ns - 1);
  }
  const Matrix& sv = sigma.value();
  const Matrix& cv = rgb.value();
  Matrix alpha(nr, ns), trans(nr, ns), weights(nr, ns), out(nr, 4);
  for (Index r = 0; r < nr; ++r) {
    double t = 1.0;
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    double o = 0.0;
    for (Index i = 0; i < ns; ++i) {
      const Index n = r * ns + i;
      const double a = -std::expm1(-density_scale * sv(n, 0) * delta(r, i));
      alpha(r, i) = a;
      trans(r, i) = t;
      const double w = t * a;
      weights(r, i) = w;
      c += w * cv.row(n).transpose();
      o += w;
      t *= 1.0 - a;
    }
    out.block(r, 0, 1, 3) = c.transpose();
    out(r, 3) = o;
  }

  auto op = ad::make_op(
      "composite", std::move(out), {sigma, rgb},
      [alpha, trans, weights, delta, density_scale, nr, ns](ad::Node& self) {
        const auto& sig = self.inputs[0];
        const auto& col = self.inputs[1];
        const Matrix& cvals = col->value;
        Matrix gs(nr * ns, 1), gc(nr * ns, 3);
        for (Index r = 0; r < nr; ++r) {
          const Eigen::Vector3d g_rgb = self.grad.block(r, 0, 1, 3).transpose();
          const double g_op = self.grad(r, 3);
          Eigen::Vector3d behind = Eigen::Vector3d::Zero();
          double behind_op = 0.0;
          for (Index i = ns - 1; i >= 0; --i) {
            const Index n = r * ns + i;
            const Eigen::Vector3d ci = cvals.row(n).transpose();
            const double a = alpha(r, i);
            const double da = trans(r, i) * (g_rgb.dot(ci - behind) + g_op * (1.0 - behind_op));
            gs(n, 0) = da * density_scale * delta(r, i) * (1.0 - a);
            gc.row(n) = weights(r, i) * g_rgb.transpose();
            behind = a * ci + (1.0 - a) * behind;
            behind_op = a + (1.0 - a) * behind_op;
          }
        }
        sig->accumulate(gs);
        col->accumulate(gc);
      });

  RenderOutput result;
  result.rgb = ad::slice_cols(op, 0, 3);
  result.opacity = ad::slice_cols(op, 3, 1);
  result.transmittance = std::move(trans);
  result.weights = std::move(weights);
  return result;
}

RenderOutput render_field(const RaySampleBatch& batch, const RayTensors& rays, const FieldFn& field,
                          double density_scale) {
  const Index ns = batch.samples();
  Matrix tcol(batch.ray_count() * ns, 1);
  for (Index r = 0; r < batch.ray_count(); ++r) {
    for (Index i = 0; i < ns; ++i) tcol(r * ns + i, 0) = batch.ts(r, i);
  }
  const Tensor dirs = ad::repeat_rows(rays.directions, ns);
  const Tensor points = ad::repeat_rows(rays.origins, ns) + dirs * Tensor::constant(std::move(tcol));
  FieldSample s = field(points, dirs);
  RenderOutput out = composite(batch, s.sigma, s.rgb, density_scale);
  out.offsets = s.offset;
  out.corrections = s.correction;
  return out;
}

FieldFn network_field(const FieldParams& params, const RenderConfig& config) {
  return [&params, config](const Tensor& points, const Tensor& dirs) {
    const DeformedDensity d = deformed_density(params, points, config.alpha, config.mode);
    FieldSample s;
    s.sigma = d.sigma;
    if (config.scene_extent > 0.0) {
      const Matrix& pv = points.value();
      Matrix inside(pv.rows(), 1);
      for (Index i = 0; i < pv.rows(); ++i) {
        inside(i, 0) = pv.row(i).cwiseAbs().maxCoeff() <= config.scene_extent ? 1.0 : 0.0;
      }
      s.sigma = s.sigma * Tensor::constant(std::move(inside));
    }
    s.offset = d.offset;
    s.correction = d.correction;
    if (config.with_color) {
      s.rgb = color_eval(params, d.feature, dirs);
    } else {
      s.rgb = Tensor::constant(Matrix::Ones(points.rows(), 3));
    }
    return s;
  };
}

RenderOutput render_rays(const RaySampleBatch& batch, const RayTensors& rays, const FieldParams& params,
                         const RenderConfig& config) {
  return render_field(batch, rays, network_field(params, config), config.density_scale);
}

RenderOutput render_rays(const RaySampleBatch& batch, const FieldParams& params, const RenderConfig& config) {
  return render_rays(batch, ray_tensors(batch.rays), params, config);
}

RgbImage render_image(const FieldParams& params, const CameraPose& pose, RayBounds bounds,
                      const RenderConfig& config, int samples, int chunk) {
  RgbImage img;
  img.width = pose.width;
  img.height = pose.height;
  img.data.assign(static_cast<std::size_t>(pose.width) * pose.height * 3, 0.0);
  const int total = pose.width * pose.height;
  chunk = std::max(chunk, 1);
  for (int start = 0; start < total; start += chunk) {
    const int end = std::min(total, start + chunk);
    std::vector<Eigen::Vector2d> pixels;
    for (int p = start; p < end; ++p) pixels.emplace_back(p % pose.width + 0.5, p / pose.width + 0.5);
    const RaySampleBatch batch = sample_along_rays(generate_rays(pose, pixels, bounds), samples, false, 0);
    const RenderOutput out = render_rays(batch, params, config);
    const Matrix& rgb = out.rgb.value();
    for (int p = start; p < end; ++p) {
      for (int ch = 0; ch < 3; ++ch) img.data[static_cast<std::size_t>(p) * 3 + ch] = rgb(p - start, ch);
    }
  }
  return img;
}

Tensor loss_color(const Tensor& rgb, const Matrix& target) {
  if (rgb.rows() != target.rows() || rgb.cols() != target.cols()) {
    fail(ErrorKind::Dimension, "rendered and target colors differ in shape");
  }
  if (rgb.rows() == 0) fail(ErrorKind::InvalidInput, "empty ray batch");
  return ad::sum(ad::square(rgb - Tensor::constant(target))) * (1.0 / static_cast<double>(rgb.rows()));
}

Tensor loss_density(const Tensor& sigma, const Matrix& occupancy, double eps) {
  if (sigma.rows() != occupancy.rows() || sigma.cols() != occupancy.cols()) {
    fail(ErrorKind::Dimension, "density and occupancy differ in shape");
  }
  const Tensor s = ad::clamp(sigma, eps, 1.0 - eps);
  const Tensor target = Tensor::constant(occupancy);
  const Tensor inv_target = Tensor::constant((1.0 - occupancy.array()).matrix());
  const Tensor ll = target * ad::log(s) + inv_target * ad::log(ad::add_scalar(ad::scale(s, -1.0), 1.0));
  return ad::scale(ad::mean(ll), -1.0);
}

std::pair<Tensor, Tensor> loss_regularizers(const Tensor& offsets, const Tensor& corrections) {
  Tensor lo = offsets.defined() && offsets.rows() > 0 ? ad::mean(ad::row_norm(offsets)) : Tensor::scalar(0.0);
  Tensor lc = corrections.defined() && corrections.rows() > 0 ? ad::mean(ad::abs(corrections)) : Tensor::scalar(0.0);
  return {lo, lc};
}

Tensor loss_total(const Tensor& color, const Tensor& offset, const Tensor& correction, double lambda_a,
                  double lambda_b) {
  if (lambda_a < 0.0 || lambda_b < 0.0) fail(ErrorKind::InvalidInput, "loss weights must be non-negative");
  return color + offset * lambda_a + correction * lambda_b;
}

void write_ray_dump_csv(const std::filesystem::path& path, const RenderOutput& output) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << "ray,opacity,r,g,b\n";
  out.precision(17);
  const Matrix& rgb = output.rgb.value();
  const Matrix& op = output.opacity.value();
  for (Index r = 0; r < rgb.rows(); ++r) {
    out << r << ',' << op(r, 0) << ',' << rgb(r, 0) << ',' << rgb(r, 1) << ',' << rgb(r, 2) << '\n';
  }
  if (!out) fail(ErrorKind::Io, "failed writing " + path.string());
}

}  // namespace cadnerf
