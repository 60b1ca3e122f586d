#include "cadnerf/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "cadnerf/errors.hpp"

namespace cadnerf::ad {

namespace {
bool g_finite_checks = true;

std::string shape_str(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

Eigen::Index broadcast_dim(Eigen::Index a, Eigen::Index b, const char* op, const Matrix& x, const Matrix& y) {
  if (a == b || b == 1) return a;
  if (a == 1) return b;
  fail(ErrorKind::Dimension, std::string(op) + ": shapes " + shape_str(x) + " and " + shape_str(y) + " do not broadcast");
}

Matrix expand(const Matrix& m, Eigen::Index rows, Eigen::Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  return m.replicate(rows / m.rows(), cols / m.cols());
}

// Sums a broadcast gradient back down to the input's shape.
Matrix reduce_to(const Matrix& g, Eigen::Index rows, Eigen::Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  Matrix r = g;
  if (rows == 1 && r.rows() != 1) r = r.colwise().sum().eval();
  if (cols == 1 && r.cols() != 1) r = r.rowwise().sum().eval();
  return r;
}

}  // namespace

void set_finite_checks(bool enabled) { g_finite_checks = enabled; }
bool finite_checks() { return g_finite_checks; }

void Node::accumulate(const Matrix& g) {
  if (!requires_grad) return;
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Tensor Tensor::constant(Matrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Tensor(n);
}

Tensor Tensor::parameter(Matrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  n->grad = Matrix::Zero(n->value.rows(), n->value.cols());
  return Tensor(n);
}

double Tensor::item() const {
  if (node_->value.size() != 1) fail(ErrorKind::Dimension, "item() on non-scalar " + shape_str(node_->value));
  return node_->value(0, 0);
}

void Tensor::zero_grad() { node_->grad = Matrix::Zero(node_->value.rows(), node_->value.cols()); }

Tensor make_op(const char* name, Matrix value, std::vector<Tensor> inputs, std::function<void(Node&)> backward) {
  if (g_finite_checks && !value.allFinite()) {
    fail(ErrorKind::Divergence, std::string("non-finite value produced by op '") + name + "'");
  }
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = name;
  for (const auto& t : inputs) {
    n->requires_grad = n->requires_grad || t.requires_grad();
    n->inputs.push_back(t.node());
  }
  if (n->requires_grad) n->backward = std::move(backward);
  else n->inputs.clear();
  return Tensor(n);
}

Tensor add(const Tensor& a, const Tensor& b) {
  const auto r = broadcast_dim(a.rows(), b.rows(), "add", a.value(), b.value());
  const auto c = broadcast_dim(a.cols(), b.cols(), "add", a.value(), b.value());
  Matrix v = expand(a.value(), r, c) + expand(b.value(), r, c);
  return make_op("add", std::move(v), {a, b}, [](Node& self) {
    for (auto& in : self.inputs) in->accumulate(reduce_to(self.grad, in->value.rows(), in->value.cols()));
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const auto r = broadcast_dim(a.rows(), b.rows(), "sub", a.value(), b.value());
  const auto c = broadcast_dim(a.cols(), b.cols(), "sub", a.value(), b.value());
  Matrix v = expand(a.value(), r, c) - expand(b.value(), r, c);
  return make_op("sub", std::move(v), {a, b}, [](Node& self) {
    auto& x = self.inputs[0];
    auto& y = self.inputs[1];
    x->accumulate(reduce_to(self.grad, x->value.rows(), x->value.cols()));
    y->accumulate(reduce_to(-self.grad, y->value.rows(), y->value.cols()));
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const auto r = broadcast_dim(a.rows(), b.rows(), "mul", a.value(), b.value());
  const auto c = broadcast_dim(a.cols(), b.cols(), "mul", a.value(), b.value());
  Matrix v = expand(a.value(), r, c).cwiseProduct(expand(b.value(), r, c));
  return make_op("mul", std::move(v), {a, b}, [r, c](Node& self) {
    auto& x = self.inputs[0];
    auto& y = self.inputs[1];
    if (x->requires_grad) {
      x->accumulate(reduce_to(self.grad.cwiseProduct(expand(y->value, r, c)), x->value.rows(), x->value.cols()));
    }
    if (y->requires_grad) {
      y->accumulate(reduce_to(self.grad.cwiseProduct(expand(x->value, r, c)), y->value.rows(), y->value.cols()));
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  return make_op("scale", a.value() * s, {a}, [s](Node& self) { self.inputs[0]->accumulate(self.grad * s); });
}

Tensor add_scalar(const Tensor& a, double s) {
  return make_op("add_scalar", (a.value().array() + s).matrix(), {a},
                 [](Node& self) { self.inputs[0]->accumulate(self.grad); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    fail(ErrorKind::Dimension, "matmul: " + shape_str(a.value()) + " times " + shape_str(b.value()));
  }
  Matrix v = a.value() * b.value();
  return make_op("matmul", std::move(v), {a, b}, [](Node& self) {
    auto& x = self.inputs[0];
    auto& y = self.inputs[1];
    if (x->requires_grad) x->accumulate(self.grad * y->value.transpose());
    if (y->requires_grad) y->accumulate(x->value.transpose() * self.grad);
  });
}

namespace {

// Elementwise unary op with derivative expressed from input and output.
template <class F, class D>
Tensor unary(const char* name, const Tensor& a, F f, D dfdx) {
  Matrix v = a.value().unaryExpr(f);
  return make_op(name, std::move(v), {a}, [dfdx](Node& self) {
    const auto& x = self.inputs[0]->value;
    Matrix g(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) g.data()[i] = self.grad.data()[i] * dfdx(x.data()[i], self.value.data()[i]);
    self.inputs[0]->accumulate(g);
  });
}

constexpr double kSigmoidHi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
constexpr double kSigmoidLo = std::numeric_limits<double>::min();

}  // namespace

Tensor relu(const Tensor& a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor softplus(const Tensor& a) {
  return unary("softplus", a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
               [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        return std::clamp(s, kSigmoidLo, kSigmoidHi);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sin(const Tensor& a) {
  return unary("sin", a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Tensor cos(const Tensor& a) {
  return unary("cos", a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Tensor abs(const Tensor& a) {
  return unary("abs", a, [](double x) { return std::abs(x); },
               [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& a) {
  return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return unary("clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& a) {
  return make_op("sum", Matrix::Constant(1, 1, a.value().sum()), {a}, [](Node& self) {
    const auto& x = self.inputs[0]->value;
    self.inputs[0]->accumulate(Matrix::Constant(x.rows(), x.cols(), self.grad(0, 0)));
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) fail(ErrorKind::Dimension, "mean of an empty tensor");
  return make_op("mean", Matrix::Constant(1, 1, a.value().sum() / n), {a}, [n](Node& self) {
    const auto& x = self.inputs[0]->value;
    self.inputs[0]->accumulate(Matrix::Constant(x.rows(), x.cols(), self.grad(0, 0) / n));
  });
}

Tensor row_sum(const Tensor& a) {
  Matrix v = a.value().rowwise().sum();
  return make_op("row_sum", std::move(v), {a}, [](Node& self) {
    const auto& x = self.inputs[0]->value;
    self.inputs[0]->accumulate(self.grad.replicate(1, x.cols()));
  });
}

Tensor row_norm(const Tensor& a) {
  Matrix v = a.value().rowwise().norm();
  return make_op("row_norm", std::move(v), {a}, [](Node& self) {
    const auto& x = self.inputs[0]->value;
    Matrix g = Matrix::Zero(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double n = self.value(i, 0);
      if (n > 0.0) g.row(i) = x.row(i) * (self.grad(i, 0) / n);
    }
    self.inputs[0]->accumulate(g);
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) fail(ErrorKind::Dimension, "concat of nothing");
  const auto rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) fail(ErrorKind::Dimension, "concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix v(rows, cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    v.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return make_op("concat_cols", std::move(v), parts, [offsets](Node& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      auto& in = self.inputs[i];
      if (in->requires_grad) in->accumulate(self.grad.middleCols(offsets[i], in->value.cols()));
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) fail(ErrorKind::Dimension, "concat of nothing");
  const auto cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) fail(ErrorKind::Dimension, "concat_rows: column counts differ");
    rows += p.rows();
  }
  Matrix v(rows, cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    v.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return make_op("concat_rows", std::move(v), parts, [offsets](Node& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      auto& in = self.inputs[i];
      if (in->requires_grad) in->accumulate(self.grad.middleRows(offsets[i], in->value.rows()));
    }
  });
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) fail(ErrorKind::Dimension, "slice_cols out of range");
  Matrix v = a.value().middleCols(start, count);
  return make_op("slice_cols", std::move(v), {a}, [start, count](Node& self) {
    const auto& x = self.inputs[0]->value;
    Matrix g = Matrix::Zero(x.rows(), x.cols());
    g.middleCols(start, count) = self.grad;
    self.inputs[0]->accumulate(g);
  });
}

Tensor repeat_rows(const Tensor& a, Eigen::Index times) {
  if (times < 1) fail(ErrorKind::Dimension, "repeat_rows needs times >= 1");
  const auto& x = a.value();
  Matrix v(x.rows() * times, x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) v.middleRows(i * times, times) = x.row(i).replicate(times, 1);
  return make_op("repeat_rows", std::move(v), {a}, [times](Node& self) {
    const auto& in = self.inputs[0]->value;
    Matrix g(in.rows(), in.cols());
    for (Eigen::Index i = 0; i < in.rows(); ++i) g.row(i) = self.grad.middleRows(i * times, times).colwise().sum();
    self.inputs[0]->accumulate(g);
  });
}

void backward(const Tensor& loss) {
  if (loss.value().size() != 1) fail(ErrorKind::Dimension, "backward needs a scalar loss");
  Node* root = loss.node().get();
  if (root->consumed) fail(ErrorKind::DoubleBackward, "backward already ran on this graph");
  root->consumed = true;
  if (!root->requires_grad) return;

  // iterative post-order DFS for a topological order
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && !child->inputs.empty() && visited.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->grad = Matrix::Constant(1, 1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->grad.size() == 0 || !n->backward) continue;
    n->backward(*n);
    if (n != root) n->grad.resize(0, 0);  // intermediate grads are no longer needed
  }
}

}  // namespace cadnerf::ad
