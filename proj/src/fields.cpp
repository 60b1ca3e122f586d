#include "cadnerf/fields.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "cadnerf/errors.hpp"

namespace cadnerf {

using ad::Matrix;
using ad::Tensor;

double band_weight(double alpha, int k) {
  const double t = std::clamp(alpha - k, 0.0, 1.0);
  return (1.0 - std::cos(std::numbers::pi * t)) / 2.0;
}

Tensor positional_encoding(const Tensor& x, int frequencies, double alpha) {
  if (frequencies < 0) fail(ErrorKind::InvalidInput, "frequency count must be >= 0");
  const auto& in = x.value();
  const Eigen::Index n = in.rows(), d = in.cols();
  const Eigen::Index width = d * (1 + 2 * frequencies);
  Matrix out(n, width);
  out.leftCols(d) = in;
  std::vector<double> weights(frequencies), freqs(frequencies);
  for (int k = 0; k < frequencies; ++k) {
    weights[k] = band_weight(alpha, k);
    freqs[k] = std::ldexp(std::numbers::pi, k);
  }
  for (int k = 0; k < frequencies; ++k) {
    const Eigen::Index s = d + 2 * d * k;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        const double a = freqs[k] * in(i, j);
        out(i, s + j) = weights[k] * std::sin(a);
        out(i, s + d + j) = weights[k] * std::cos(a);
      }
    }
  }
  return ad::make_op("positional_encoding", std::move(out), {x}, [weights, freqs, d](ad::Node& self) {
    const auto& xv = self.inputs[0]->value;
    Matrix g = self.grad.leftCols(d);
    for (std::size_t k = 0; k < weights.size(); ++k) {
      if (weights[k] == 0.0) continue;
      const Eigen::Index s = d + 2 * d * static_cast<Eigen::Index>(k);
      for (Eigen::Index i = 0; i < xv.rows(); ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
          const double a = freqs[k] * xv(i, j);
          g(i, j) += weights[k] * freqs[k] *
                     (self.grad(i, s + j) * std::cos(a) - self.grad(i, s + d + j) * std::sin(a));
        }
      }
    }
    self.inputs[0]->accumulate(g);
  });
}

Eigen::VectorXd positional_encoding(const Eigen::Vector3d& x, int frequencies, double alpha) {
  Matrix row = x.transpose();
  return positional_encoding(Tensor::constant(row), frequencies, alpha).value().transpose();
}

namespace {

Linear make_linear(int in, int out, std::mt19937_64& rng, bool zero = false) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> uni(-bound, bound);
  Matrix w(in, out), b(1, out);
  if (zero) {
    w.setZero();
    b.setZero();
  } else {
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = uni(rng);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = uni(rng);
  }
  return {Tensor::parameter(std::move(w)), Tensor::parameter(std::move(b))};
}

Linear clone_linear(const Linear& l) {
  return {Tensor::parameter(l.weight.value()), Tensor::parameter(l.bias.value())};
}

void push(std::vector<std::pair<std::string, Tensor>>& out, const std::string& name, const Linear& l) {
  out.emplace_back(name + ".weight", l.weight);
  out.emplace_back(name + ".bias", l.bias);
}

Tensor encode_points(const FieldParams& p, const Tensor& points, double alpha) {
  const Tensor scaled = p.config.scene_scale == 1.0 ? points : ad::scale(points, 1.0 / p.config.scene_scale);
  return positional_encoding(scaled, p.encoding.position_frequencies, alpha);
}

}  // namespace

FieldParams FieldParams::create(const FieldConfig& config, const EncodingConfig& encoding, std::uint64_t seed) {
  if (config.hidden < 1 || config.feature < 1 || config.deform_hidden < 1 || config.color_hidden < 1) {
    fail(ErrorKind::InvalidInput, "layer widths must be positive");
  }
  std::mt19937_64 rng(seed);
  FieldParams p;
  p.config = config;
  p.encoding = encoding;
  const int pos_in = 3 * (1 + 2 * encoding.position_frequencies);
  const int dir_in = 3 * (1 + 2 * encoding.direction_frequencies);

  p.density_in = make_linear(pos_in, config.hidden, rng);
  for (int i = 0; i < config.resnet_blocks; ++i) {
    ResnetBlock block;
    block.fc0 = make_linear(config.hidden, config.hidden, rng);
    block.fc1 = make_linear(config.hidden, config.hidden, rng);
    block.fc1.weight.mutable_value().setZero();
    p.density_blocks.push_back(std::move(block));
  }
  p.density_out = make_linear(config.hidden, 1, rng);
  p.feature_out = make_linear(config.hidden, config.feature, rng);

  p.deform_layers.push_back(make_linear(pos_in, config.deform_hidden, rng));
  p.deform_layers.push_back(make_linear(config.deform_hidden, config.deform_hidden, rng));
  p.deform_layers.push_back(make_linear(config.deform_hidden, 4, rng, /*zero=*/true));

  p.color_layers.push_back(make_linear(config.feature + dir_in, config.color_hidden, rng));
  p.color_layers.push_back(make_linear(config.color_hidden, config.color_hidden, rng));
  p.color_layers.push_back(make_linear(config.color_hidden, config.color_hidden, rng));
  p.color_layers.push_back(make_linear(config.color_hidden, 3, rng));
  return p;
}

std::vector<std::pair<std::string, Tensor>> FieldParams::parameters(const std::string& network) const {
  std::vector<std::pair<std::string, Tensor>> out;
  if (network == "density") {
    push(out, "density.in", density_in);
    for (std::size_t i = 0; i < density_blocks.size(); ++i) {
      push(out, "density.block" + std::to_string(i) + ".fc0", density_blocks[i].fc0);
      push(out, "density.block" + std::to_string(i) + ".fc1", density_blocks[i].fc1);
    }
    push(out, "density.out", density_out);
    push(out, "density.feature", feature_out);
  } else if (network == "deform") {
    for (std::size_t i = 0; i < deform_layers.size(); ++i) push(out, "deform.fc" + std::to_string(i), deform_layers[i]);
  } else if (network == "color") {
    for (std::size_t i = 0; i < color_layers.size(); ++i) push(out, "color.fc" + std::to_string(i), color_layers[i]);
  } else {
    fail(ErrorKind::InvalidInput, "unknown network '" + network + "'");
  }
  return out;
}

std::vector<std::pair<std::string, Tensor>> FieldParams::all_parameters() const {
  auto out = parameters("density");
  for (const char* net : {"deform", "color"}) {
    auto more = parameters(net);
    out.insert(out.end(), more.begin(), more.end());
  }
  return out;
}

FieldParams FieldParams::clone() const {
  FieldParams p;
  p.config = config;
  p.encoding = encoding;
  p.density_in = clone_linear(density_in);
  for (const auto& b : density_blocks) p.density_blocks.push_back({clone_linear(b.fc0), clone_linear(b.fc1)});
  p.density_out = clone_linear(density_out);
  p.feature_out = clone_linear(feature_out);
  for (const auto& l : deform_layers) p.deform_layers.push_back(clone_linear(l));
  for (const auto& l : color_layers) p.color_layers.push_back(clone_linear(l));
  return p;
}

DensityOutput density_eval(const FieldParams& p, const Tensor& points, double alpha) {
  Tensor h = p.density_in(encode_points(p, points, alpha));
  for (const auto& block : p.density_blocks) h = block(h);
  const Tensor act = ad::relu(h);
  return {ad::sigmoid(p.density_out(act)), p.feature_out(act)};
}

DeformOutput deform_eval(const FieldParams& p, const Tensor& points, double alpha) {
  Tensor h = encode_points(p, points, alpha);
  for (std::size_t i = 0; i + 1 < p.deform_layers.size(); ++i) h = ad::relu(p.deform_layers[i](h));
  const Tensor out = p.deform_layers.back()(h);
  return {ad::slice_cols(out, 0, 3), ad::slice_cols(out, 3, 1)};
}

DeformedDensity deformed_density(const FieldParams& p, const Tensor& points, double alpha, DeformMode mode) {
  if (mode == DeformMode::Disabled) {
    auto d = density_eval(p, points, p.encoding.position_frequencies);
    return {d.sigma, d.feature, {}, {}};
  }
  DeformOutput g;
  if (mode == DeformMode::Learned) {
    g = deform_eval(p, points, alpha);
  } else {
    g = {Tensor::zeros(points.rows(), 3), Tensor::zeros(points.rows(), 1)};
  }
  auto d = density_eval(p, points + g.offset, p.encoding.position_frequencies);
  return {ad::clamp(d.sigma + g.correction, 0.0, 1.0), d.feature, g.offset, g.correction};
}

Tensor color_eval(const FieldParams& p, const Tensor& feature, const Tensor& directions) {
  const Tensor enc = positional_encoding(directions, p.encoding.direction_frequencies,
                                         static_cast<double>(p.encoding.direction_frequencies));
  Tensor h = ad::concat_cols({feature, enc});
  for (std::size_t i = 0; i + 1 < p.color_layers.size(); ++i) h = ad::relu(p.color_layers[i](h));
  return ad::sigmoid(p.color_layers.back()(h));
}

}  // namespace cadnerf
