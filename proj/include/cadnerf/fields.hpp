#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "cadnerf/autodiff.hpp"

namespace cadnerf {

struct EncodingConfig {
  int position_frequencies = 10;  // L_x
  int direction_frequencies = 4;  // L_d
  double alpha = 10.0;            // annealing progress in [0, L_x]
};

/// Window weight of frequency band k at progress alpha:
/// (1 - cos(pi * clamp(alpha - k, 0, 1))) / 2.
double band_weight(double alpha, int k);

/// [x, sin(2^k pi x) w_k, cos(2^k pi x) w_k] for k = 0..L-1, per row.
/// Differentiable with respect to x.
ad::Tensor positional_encoding(const ad::Tensor& x, int frequencies, double alpha);
Eigen::VectorXd positional_encoding(const Eigen::Vector3d& x, int frequencies, double alpha);

struct FieldConfig {
  int hidden = 128;
  int feature = 128;
  int deform_hidden = 128;
  int color_hidden = 128;
  int resnet_blocks = 4;
  /// World coordinates are divided by this before encoding.
  double scene_scale = 1.0;
};

struct Linear {
  ad::Tensor weight;  // in x out
  ad::Tensor bias;    // 1 x out

  ad::Tensor operator()(const ad::Tensor& x) const { return ad::matmul(x, weight) + bias; }
};

struct ResnetBlock {
  Linear fc0;
  Linear fc1;  // zero-initialized weights

  ad::Tensor operator()(const ad::Tensor& x) const { return x + fc1(ad::relu(fc0(ad::relu(x)))); }
};

/// Density network D, deformation network G and the color network.
struct FieldParams {
  FieldConfig config;
  EncodingConfig encoding;

  Linear density_in;
  std::vector<ResnetBlock> density_blocks;
  Linear density_out;  // -> 1 logit
  Linear feature_out;  // -> feature vector

  std::vector<Linear> deform_layers;  // last layer zero-initialized, 4 outputs

  std::vector<Linear> color_layers;  // 4 layers, last -> 3

  static FieldParams create(const FieldConfig& config, const EncodingConfig& encoding, std::uint64_t seed);

  /// Named parameter tensors of one network: "density", "deform" or "color".
  std::vector<std::pair<std::string, ad::Tensor>> parameters(const std::string& network) const;
  std::vector<std::pair<std::string, ad::Tensor>> all_parameters() const;
  /// Deep copy with independent tensors.
  FieldParams clone() const;
};

struct DensityOutput {
  ad::Tensor sigma;    // N x 1, in (0,1)
  ad::Tensor feature;  // N x F
};

struct DeformOutput {
  ad::Tensor offset;      // N x 3
  ad::Tensor correction;  // N x 1
};

enum class DeformMode {
  Learned,    // sigma2 = clamp(D(x + o) + c1, 0, 1) with (o, c1) = G(x)
  ZeroWired,  // same wiring with (o, c1) hard-wired to zero
  Disabled,   // sigma = D(x)
};

struct DeformedDensity {
  ad::Tensor sigma;
  ad::Tensor feature;
  ad::Tensor offset;      // undefined when Disabled
  ad::Tensor correction;  // undefined when Disabled
};

DensityOutput density_eval(const FieldParams& params, const ad::Tensor& points, double alpha);
DeformOutput deform_eval(const FieldParams& params, const ad::Tensor& points, double alpha);
/// `alpha` anneals the encoding seen by the deformation network; the density
/// network always receives the full encoding so the pretrained shape prior is
/// not perturbed when higher bands switch on.
DeformedDensity deformed_density(const FieldParams& params, const ad::Tensor& points, double alpha, DeformMode mode);
/// RGB in (0,1) from density features and unit view directions.
ad::Tensor color_eval(const FieldParams& params, const ad::Tensor& feature, const ad::Tensor& directions);

}  // namespace cadnerf
