#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mxpool/common.hpp"

namespace mxpool {

namespace detail {

struct TensorNode {
  Matrix value;
  Matrix grad;  // lazily sized; empty means "all zero so far"
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;

  void accumulate(const Matrix& g) {
    if (!requires_grad) return;
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

}  // namespace detail

// Dense double-precision matrix participating in a reverse-mode computation
// graph. Copying a Tensor copies the handle, not the storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Matrix v) {
    Tensor t;
    t.node_ = std::make_shared<detail::TensorNode>();
    t.node_->value = std::move(v);
    return t;
  }

  static Tensor variable(Matrix v) {
    Tensor t = constant(std::move(v));
    t.node_->requires_grad = true;
    return t;
  }

  static Tensor scalar_constant(double v) { return constant(Matrix::Constant(1, 1, v)); }

  bool defined() const { return node_ != nullptr; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  const Matrix& value() const { return node_->value; }
  bool requires_grad() const { return node_->requires_grad; }

  // Gradient accumulated by the last backward() pass; zeros if untouched.
  const Matrix& grad() const {
    if (node_->grad.size() == 0) {
      node_->grad = Matrix::Zero(node_->value.rows(), node_->value.cols());
    }
    return node_->grad;
  }

  Matrix& mutable_grad() {
    grad();
    return node_->grad;
  }

  void zero_grad() { node_->grad.resize(0, 0); }

  // In-place update of a trainable tensor (optimizer use only; invalidates no
  // graph because parameters are always leaves).
  Matrix& mutable_value() { return node_->value; }

  std::shared_ptr<detail::TensorNode> node() const { return node_; }

  // Reverse-mode sweep from a 1x1 loss. Gradients accumulate into .grad of
  // every reachable tensor with requires_grad; the caller owns zeroing.
  void backward() const;

 private:
  std::shared_ptr<detail::TensorNode> node_;

  friend Tensor make_op(Matrix value, std::vector<Tensor> parents,
                        std::function<void(detail::TensorNode&)> backprop);
};

inline Tensor make_op(Matrix value, std::vector<Tensor> parents,
                      std::function<void(detail::TensorNode&)> backprop) {
  Tensor t;
  t.node_ = std::make_shared<detail::TensorNode>();
  t.node_->value = std::move(value);
  bool needs = false;
  for (const Tensor& p : parents) needs = needs || p.requires_grad();
  if (needs) {
    t.node_->requires_grad = true;
    t.node_->parents.reserve(parents.size());
    for (const Tensor& p : parents) t.node_->parents.push_back(p.node());
    t.node_->backprop = std::move(backprop);
  }
  return t;
}

inline void Tensor::backward() const {
  if (!defined() || node_->value.rows() != 1 || node_->value.cols() != 1) {
    throw ContractError("backward() requires a 1x1 loss tensor");
  }
  // Post-order DFS gives a topological order of the reachable graph.
  std::vector<detail::TensorNode*> order;
  std::unordered_set<detail::TensorNode*> seen;
  std::vector<std::pair<detail::TensorNode*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::TensorNode* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorNode* n = *it;
    if (n->backprop && n->grad.size() != 0) n->backprop(*n);
  }
}

namespace detail {

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shapes " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()));
  }
  return make_op(a.value() * b.value(), {a, b}, [a, b](detail::TensorNode& n) {
    a.node()->accumulate(n.grad * b.value().transpose());
    b.node()->accumulate(a.value().transpose() * n.grad);
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  return make_op(a.value() + b.value(), {a, b}, [a, b](detail::TensorNode& n) {
    a.node()->accumulate(n.grad);
    b.node()->accumulate(n.grad);
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  return make_op(a.value() - b.value(), {a, b}, [a, b](detail::TensorNode& n) {
    a.node()->accumulate(n.grad);
    b.node()->accumulate(-n.grad);
  });
}

inline Tensor hadamard(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "hadamard");
  return make_op(a.value().cwiseProduct(b.value()), {a, b}, [a, b](detail::TensorNode& n) {
    a.node()->accumulate(n.grad.cwiseProduct(b.value()));
    b.node()->accumulate(n.grad.cwiseProduct(a.value()));
  });
}

inline Tensor transpose(const Tensor& x) {
  return make_op(x.value().transpose(), {x}, [x](detail::TensorNode& n) {
    x.node()->accumulate(n.grad.transpose());
  });
}

// Subgradient at 0 is 0.
inline Tensor relu(const Tensor& x) {
  return make_op(x.value().cwiseMax(0.0), {x}, [x](detail::TensorNode& n) {
    x.node()->accumulate(
        n.grad.cwiseProduct((x.value().array() > 0.0).cast<double>().matrix()));
  });
}

// Row-wise softmax with max-subtraction.
inline Tensor row_softmax(const Tensor& x) {
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.value().row(i).maxCoeff();
    Eigen::RowVectorXd e = (x.value().row(i).array() - m).exp().matrix();
    y.row(i) = e / e.sum();
  }
  return make_op(std::move(y), {x}, [x](detail::TensorNode& n) {
    Matrix dx(n.value.rows(), n.value.cols());
    for (Eigen::Index i = 0; i < n.value.rows(); ++i) {
      const double dot = n.grad.row(i).dot(n.value.row(i));
      dx.row(i) = n.value.row(i).cwiseProduct(
          (n.grad.row(i).array() - dot).matrix());
    }
    x.node()->accumulate(dx);
  });
}

// Column-wise concatenation in argument order.
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: empty argument list");
  Eigen::Index r = parts.front().rows();
  Eigen::Index c = 0;
  for (const Tensor& p : parts) {
    if (p.rows() != r) throw ShapeError("concat_cols: row counts differ");
    c += p.cols();
  }
  Matrix v(r, c);
  Eigen::Index off = 0;
  for (const Tensor& p : parts) {
    v.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }
  return make_op(std::move(v), parts, [parts](detail::TensorNode& n) {
    Eigen::Index off = 0;
    for (const Tensor& p : parts) {
      p.node()->accumulate(n.grad.middleCols(off, p.cols()));
      off += p.cols();
    }
  });
}

// alpha must be 1x1; scales every entry (the paper-style scalar weighting of a
// network's output block).
inline Tensor scale_by_scalar(const Tensor& x, const Tensor& alpha) {
  if (alpha.rows() != 1 || alpha.cols() != 1) {
    throw ShapeError("scale_by_scalar: scale must be 1x1");
  }
  return make_op(x.value() * alpha.value()(0, 0), {x, alpha}, [x, alpha](detail::TensorNode& n) {
    x.node()->accumulate(n.grad * alpha.value()(0, 0));
    alpha.node()->accumulate(Matrix::Constant(1, 1, n.grad.cwiseProduct(x.value()).sum()));
  });
}

// Contiguous column block [start, start+cols).
inline Tensor col_block(const Tensor& x, Eigen::Index start, Eigen::Index cols) {
  if (start < 0 || cols < 1 || start + cols > x.cols()) {
    throw ShapeError("col_block: block out of range");
  }
  return make_op(x.value().middleCols(start, cols), {x},
                 [x, start, cols](detail::TensorNode& n) {
                   Matrix g = Matrix::Zero(x.rows(), x.cols());
                   g.middleCols(start, cols) = n.grad;
                   x.node()->accumulate(g);
                 });
}

// Mean over the row index: n x c -> 1 x c.
inline Tensor row_mean(const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.rows());
  return make_op(x.value().colwise().mean(), {x}, [x, inv](detail::TensorNode& n) {
    x.node()->accumulate((Eigen::VectorXd::Ones(x.rows()) * n.grad) * inv);
  });
}

// Row sums: n x c -> n x 1.
inline Tensor row_sum(const Tensor& x) {
  return make_op(x.value().rowwise().sum(), {x}, [x](detail::TensorNode& n) {
    x.node()->accumulate(n.grad * Eigen::RowVectorXd::Ones(x.cols()));
  });
}

inline Tensor sum_all(const Tensor& x) {
  return make_op(Matrix::Constant(1, 1, x.value().sum()), {x}, [x](detail::TensorNode& n) {
    x.node()->accumulate(Matrix::Constant(x.rows(), x.cols(), n.grad(0, 0)));
  });
}

// x + ones * bias, bias a 1 x c row.
inline Tensor add_bias_row_broadcast(const Tensor& x, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw ShapeError("add_bias_row_broadcast: bias must be 1x" + std::to_string(x.cols()));
  }
  return make_op(x.value().rowwise() + bias.value().row(0), {x, bias},
                 [x, bias](detail::TensorNode& n) {
                   x.node()->accumulate(n.grad);
                   bias.node()->accumulate(n.grad.colwise().sum());
                 });
}

// Elementwise power; domain restricted to strictly positive entries when the
// exponent is non-integral (used for the degree^(-1/2) scaling).
inline Tensor elem_pow(const Tensor& x, double p) {
  return make_op(x.value().array().pow(p).matrix(), {x}, [x, p](detail::TensorNode& n) {
    x.node()->accumulate(
        n.grad.cwiseProduct((p * x.value().array().pow(p - 1.0)).matrix()));
  });
}

// Frobenius norm as a 1x1 tensor. Gradient guarded near zero.
inline Tensor frobenius_norm(const Tensor& x) {
  const double nrm = x.value().norm();
  return make_op(Matrix::Constant(1, 1, nrm), {x}, [x, nrm](detail::TensorNode& n) {
    x.node()->accumulate(n.grad(0, 0) / std::max(nrm, 1e-12) * x.value());
  });
}

// Mean over rows of the Shannon entropy of each row. Rows are expected to be
// probability vectors (softmax output); entries are clamped away from 0.
inline Tensor row_entropy_mean(const Tensor& s) {
  const double inv = 1.0 / static_cast<double>(s.rows());
  double h = 0.0;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      const double v = s.value()(i, j);
      if (v > 0.0) h -= v * std::log(v);
    }
  }
  return make_op(Matrix::Constant(1, 1, h * inv), {s}, [s, inv](detail::TensorNode& n) {
    Matrix g(s.rows(), s.cols());
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      for (Eigen::Index j = 0; j < s.cols(); ++j) {
        g(i, j) = -(std::log(std::max(s.value()(i, j), 1e-300)) + 1.0) * inv;
      }
    }
    s.node()->accumulate(n.grad(0, 0) * g);
  });
}

// Softmax cross-entropy from a 1 x C logits row, log-sum-exp stabilized.
inline Tensor cross_entropy_from_logits(const Tensor& logits, int label) {
  if (logits.rows() != 1) throw ShapeError("cross_entropy_from_logits: logits must be 1xC");
  if (label < 0 || label >= logits.cols()) {
    throw ContractError("cross_entropy_from_logits: label " + std::to_string(label) +
                        " out of range [0, " + std::to_string(logits.cols()) + ")");
  }
  const double m = logits.value().maxCoeff();
  const double lse = m + std::log((logits.value().array() - m).exp().sum());
  return make_op(Matrix::Constant(1, 1, lse - logits.value()(0, label)), {logits},
                 [logits, label, lse](detail::TensorNode& n) {
                   Eigen::RowVectorXd p = (logits.value().array() - lse).exp();
                   p(label) -= 1.0;
                   logits.node()->accumulate(n.grad(0, 0) * p);
                 });
}

}  // namespace mxpool
