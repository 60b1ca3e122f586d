#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace cadnerf::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of the tape. `backward` reads `grad` and accumulates into the
/// inputs that require gradients.
struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  bool consumed = false;
  const char* op = "leaf";
  std::vector<NodePtr> inputs;
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& g);
};

/// Dense rank-2 tensor handle (scalars are 1x1). Copies share the node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor constant(Matrix value);
  static Tensor parameter(Matrix value);
  static Tensor scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }
  static Tensor zeros(Eigen::Index rows, Eigen::Index cols) { return constant(Matrix::Zero(rows, cols)); }

  bool defined() const { return static_cast<bool>(node_); }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Matrix& mutable_grad() { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  std::vector<Eigen::Index> shape() const { return {rows(), cols()}; }
  double item() const;
  const NodePtr& node() const { return node_; }

  void zero_grad();

 private:
  NodePtr node_;
};

/// When enabled (default), every op checks its output for NaN/Inf and
/// throws a Divergence error naming the op.
void set_finite_checks(bool enabled);
bool finite_checks();

/// Builds a node from a precomputed value and a backward closure.
Tensor make_op(const char* name, Matrix value, std::vector<Tensor> inputs, std::function<void(Node&)> backward);

// Elementwise binary ops broadcast dimensions of size 1.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& a);
Tensor softplus(const Tensor& a);
/// Output clamped into the open interval (0,1).
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor square(const Tensor& a);
/// Gradient is zero where the value is clamped.
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Sum over columns: N x D -> N x 1.
Tensor row_sum(const Tensor& a);
/// Euclidean norm of each row, N x D -> N x 1. Subgradient 0 at the origin.
Tensor row_norm(const Tensor& a);

Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count);
/// Repeats each row `times` times consecutively: N x D -> (N*times) x D.
Tensor repeat_rows(const Tensor& a, Eigen::Index times);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

/// Reverse sweep from a scalar loss. A graph can be swept only once.
void backward(const Tensor& loss);

}  // namespace cadnerf::ad
