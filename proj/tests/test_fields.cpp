#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "cadnerf/fields.hpp"

using namespace cadnerf;
using ad::Matrix;
using ad::Tensor;

namespace {

FieldParams small_fields(std::uint64_t seed = 1) {
  return FieldParams::create(FieldConfig{16, 8, 12, 12, 2, 1.0}, EncodingConfig{4, 2, 4.0}, seed);
}

Matrix random_points(Eigen::Index n, std::mt19937_64& rng, double extent = 0.6) {
  std::uniform_real_distribution<double> u(-extent, extent);
  Matrix m(n, 3);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

}  // namespace

TEST_CASE("fully coarse encoding keeps only the raw coordinates") {
  const Eigen::Vector3d x(0.3, -0.2, 0.9);
  const Eigen::VectorXd e = positional_encoding(x, 6, 0.0);
  REQUIRE(e.size() == 3 + 6 * 6);
  CHECK(e.head<3>() == x);
  CHECK(e.tail(36).isZero());
}

TEST_CASE("fully fine encoding uses unit weights") {
  const Eigen::Vector3d x(0.3, -0.2, 0.9);
  const Eigen::VectorXd e = positional_encoding(x, 5, 5.0);
  for (int k = 0; k < 5; ++k) {
    CHECK(band_weight(5.0, k) == 1.0);
    for (int d = 0; d < 3; ++d) {
      const double arg = std::ldexp(std::numbers::pi, k) * x(d);
      CHECK(e(3 + 6 * k + d) == doctest::Approx(std::sin(arg)).epsilon(1e-12));
      CHECK(e(3 + 6 * k + 3 + d) == doctest::Approx(std::cos(arg)).epsilon(1e-12));
    }
  }
}

TEST_CASE("at the origin sin terms vanish and cos terms equal the band weights") {
  const double alpha = 2.4;
  const Eigen::VectorXd e = positional_encoding(Eigen::Vector3d::Zero(), 4, alpha);
  for (int k = 0; k < 4; ++k) {
    for (int d = 0; d < 3; ++d) {
      CHECK(e(3 + 6 * k + d) == 0.0);
      CHECK(e(3 + 6 * k + 3 + d) == band_weight(alpha, k));
    }
  }
  CHECK(band_weight(alpha, 2) == doctest::Approx((1.0 - std::cos(0.4 * std::numbers::pi)) / 2.0));
}

TEST_CASE("band weights are bounded and non-decreasing in alpha") {
  for (int k = 0; k < 10; ++k) {
    double prev = 0.0;
    for (double a = 0.0; a <= 10.0; a += 0.05) {
      const double w = band_weight(a, k);
      CHECK(w >= 0.0);
      CHECK(w <= 1.0);
      CHECK(w >= prev);
      prev = w;
    }
  }
}

TEST_CASE("encoding gradient with respect to the input matches central differences") {
  std::mt19937_64 rng(2);
  Tensor x = Tensor::parameter(random_points(3, rng));
  auto loss = [&] { return ad::sum(ad::square(positional_encoding(x, 4, 2.7))); };
  ad::backward(loss());
  for (Eigen::Index i = 0; i < x.value().size(); ++i) {
    const double h = 1e-5, orig = x.value().data()[i];
    x.mutable_value().data()[i] = orig + h;
    const double up = loss().item();
    x.mutable_value().data()[i] = orig - h;
    const double down = loss().item();
    x.mutable_value().data()[i] = orig;
    CHECK(x.grad().data()[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-7));
  }
}

TEST_CASE("density lies strictly inside (0,1) and is pure") {
  std::mt19937_64 rng(3);
  const FieldParams f = small_fields();
  const Tensor pts = Tensor::constant(random_points(200, rng, 3.0));
  const DensityOutput a = density_eval(f, pts, 4.0);
  const DensityOutput b = density_eval(f, pts, 4.0);
  CHECK((a.sigma.value().array() > 0.0).all());
  CHECK((a.sigma.value().array() < 1.0).all());
  CHECK(a.sigma.value() == b.sigma.value());
  CHECK(a.feature.value() == b.feature.value());
}

TEST_CASE("the deformation network starts as the identity") {
  std::mt19937_64 rng(4);
  const FieldParams f = small_fields();
  const Tensor pts = Tensor::constant(random_points(1000, rng));
  const DeformOutput g = deform_eval(f, pts, 4.0);
  CHECK(g.offset.value().cwiseAbs().maxCoeff() < 1e-3);
  CHECK(g.correction.value().cwiseAbs().maxCoeff() < 1e-3);
  const DeformedDensity learned = deformed_density(f, pts, 4.0, DeformMode::Learned);
  const DeformedDensity plain = deformed_density(f, pts, 4.0, DeformMode::Disabled);
  CHECK(learned.sigma.value() == plain.sigma.value());
}

TEST_CASE("zero-wired deformation reproduces the undeformed density bit for bit") {
  std::mt19937_64 rng(5);
  FieldParams f = small_fields(9);
  // A non-trivial deformation network must not leak into the zero wiring.
  f.deform_layers.back().weight.mutable_value().setConstant(0.3);
  const Tensor pts = Tensor::constant(random_points(300, rng));
  const DeformedDensity zero = deformed_density(f, pts, 1.5, DeformMode::ZeroWired);
  const DeformedDensity off = deformed_density(f, pts, 1.5, DeformMode::Disabled);
  CHECK(zero.sigma.value() == off.sigma.value());
  CHECK(zero.feature.value() == off.feature.value());
}

TEST_CASE("a large correction saturates at one") {
  FieldParams f = small_fields();
  f.density_out.weight.mutable_value().setZero();
  f.density_out.bias.mutable_value().setZero();  // sigma1 = 0.5 everywhere
  f.deform_layers.back().bias.mutable_value()(0, 3) = 2.0;
  const Tensor pts = Tensor::constant(Matrix::Constant(4, 3, 0.1));
  const DeformedDensity d = deformed_density(f, pts, 4.0, DeformMode::Learned);
  CHECK((d.sigma.value().array() == 1.0).all());
}

TEST_CASE("deformation parameters receive a finite-difference-consistent gradient") {
  std::mt19937_64 rng(6);
  FieldParams f = small_fields(4);
  std::normal_distribution<double> g(0.0, 0.2);
  for (Eigen::Index i = 0; i < f.deform_layers.back().weight.value().size(); ++i) {
    f.deform_layers.back().weight.mutable_value().data()[i] = g(rng);
  }
  const Tensor pts = Tensor::constant(random_points(64, rng, 0.4));
  auto loss = [&] { return ad::sum(deformed_density(f, pts, 4.0, DeformMode::Learned).sigma); };
  ad::backward(loss());
  Tensor w = f.deform_layers.front().weight;
  const Eigen::Index idx = 5;
  CHECK(w.grad().data()[idx] != 0.0);
  const double h = 1e-5, orig = w.value().data()[idx];
  w.mutable_value().data()[idx] = orig + h;
  const double up = loss().item();
  w.mutable_value().data()[idx] = orig - h;
  const double down = loss().item();
  w.mutable_value().data()[idx] = orig;
  CHECK(w.grad().data()[idx] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-4));
}

TEST_CASE("color stays in [0,1] and depends on the view direction") {
  std::mt19937_64 rng(7);
  const FieldParams f = small_fields();
  const Tensor pts = Tensor::constant(random_points(50, rng));
  const DensityOutput d = density_eval(f, pts, 4.0);
  Matrix dirs = random_points(50, rng);
  for (Eigen::Index i = 0; i < dirs.rows(); ++i) dirs.row(i).normalize();
  const Matrix rgb = color_eval(f, d.feature, Tensor::constant(dirs)).value();
  CHECK((rgb.array() >= 0.0).all());
  CHECK((rgb.array() <= 1.0).all());
  const Matrix flipped = color_eval(f, d.feature, Tensor::constant(-dirs)).value();
  CHECK((rgb - flipped).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("parameter listing, clone independence and shapes") {
  const FieldParams f = small_fields();
  CHECK(f.parameters("density").size() == 2 + 4 * 2 + 2 + 2);
  CHECK(f.parameters("deform").size() == 6);
  CHECK(f.parameters("color").size() == 8);
  CHECK(f.all_parameters().size() ==
        f.parameters("density").size() + f.parameters("deform").size() + f.parameters("color").size());
  FieldParams c = f.clone();
  c.density_in.weight.mutable_value()(0, 0) += 1.0;
  CHECK(c.density_in.weight.value()(0, 0) != f.density_in.weight.value()(0, 0));
  CHECK(f.density_in.weight.rows() == 3 + 6 * 4);
  CHECK(f.deform_layers.back().weight.cols() == 4);
  CHECK(f.color_layers.size() == 4);
  CHECK(f.color_layers.back().weight.cols() == 3);
}
