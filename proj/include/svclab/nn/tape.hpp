#pragma once

// Reverse-mode differentiation over dense Eigen matrices.
//
// Sequence tensors use a time-major layout: a batch of B sequences of length T
// with C channels is a (T*B x C) matrix whose row t*B + b holds frame t of
// sequence b. Every node records its batch size so time-aware ops can recover T.

#include "svclab/common.hpp"

#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace svclab::nn {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// A trainable tensor with its accumulated gradient.
template <typename Scalar>
struct Param {
  std::string name;
  Mat<Scalar> value;
  Mat<Scalar> grad;
  bool frozen = false;

  Param() = default;
  Param(std::string n, Mat<Scalar> v)
      : name(std::move(n)), value(std::move(v)),
        grad(Mat<Scalar>::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename Scalar>
using ParamList = std::vector<Param<Scalar>*>;

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

template <typename Scalar>
class Tape {
 public:
  using Matrix = Mat<Scalar>;
  using Backward = std::function<void(Tape&, const Matrix&)>;

  Var constant(Matrix value, Index batch = 1) {
    return push(std::move(value), batch, false, nullptr);
  }

  /// Leaf bound to a parameter; gradients land in `p.grad` unless frozen.
  Var param(Param<Scalar>& p) {
    Var v = push(p.value, 1, !p.frozen, nullptr);
    nodes_[v.id].param = &p;
    return v;
  }

  Var push(Matrix value, Index batch, bool needs_grad, Backward backward) {
    Node n;
    n.value = std::move(value);
    n.batch = batch;
    n.needs_grad = needs_grad;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  Index batch(Var v) const { return nodes_[v.id].batch; }
  Index steps(Var v) const { return nodes_[v.id].value.rows() / nodes_[v.id].batch; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  bool any_needs_grad(std::initializer_list<Var> vs) const {
    for (Var v : vs)
      if (nodes_[v.id].needs_grad) return true;
    return false;
  }

  void accumulate(Var v, const Matrix& g) {
    Node& n = nodes_[v.id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  template <typename Expr>
  void accumulate_block(Var v, Index row, Index col, const Expr& g) {
    Node& n = nodes_[v.id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.grad.block(row, col, g.rows(), g.cols()) += g;
  }

  /// Runs the reverse sweep from a 1x1 node.
  void backward(Var root) {
    if (value(root).size() != 1)
      throw Error(Errc::shape, "backward root must be a scalar node");
    nodes_[root.id].grad = Matrix::Ones(1, 1);
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this, n.grad);
      if (n.param != nullptr) n.param->grad += n.grad;
      n.grad.resize(0, 0);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Index batch = 1;
    bool needs_grad = false;
    Backward backward;
    Param<Scalar>* param = nullptr;
  };
  std::vector<Node> nodes_;
};

template <typename Scalar>
void zero_grads(const ParamList<Scalar>& params) {
  for (auto* p : params) p->zero_grad();
}

template <typename Scalar>
Scalar grad_norm(const ParamList<Scalar>& params) {
  Scalar sq = 0;
  for (auto* p : params)
    if (!p->frozen) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

/// Rescales gradients so their global L2 norm is at most `max_norm`.
template <typename Scalar>
Scalar clip_grad_norm(const ParamList<Scalar>& params, Scalar max_norm) {
  const Scalar norm = grad_norm(params);
  if (norm > max_norm && norm > 0) {
    const Scalar k = max_norm / norm;
    for (auto* p : params)
      if (!p->frozen) p->grad *= k;
  }
  return norm;
}

}  // namespace svclab::nn
