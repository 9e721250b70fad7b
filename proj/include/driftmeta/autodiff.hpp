#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "driftmeta/errors.hpp"

namespace driftmeta {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace ad {

class Tape;

// Handle to a node on a tape: a dense float64 matrix plus, after backward,
// the gradient of the loss with respect to it.
class Tensor {
 public:
  Tensor() = default;

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Tensor(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Reverse-mode tape over dense matrices. Nodes are appended in evaluation
// order, so iterating the tape backwards visits every node after all of its
// consumers: each backward closure runs exactly once.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // New input node. Parameters and data enter the graph this way.
  Tensor leaf(Matrix value);

  // Runs backpropagation from a 1x1 loss node. Every node reachable from the
  // loss receives its gradient; unreachable nodes keep zero. Callable once.
  void backward(const Tensor& loss);

  const Matrix& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  const Matrix& grad(int id) const;
  Matrix& grad_ref(int id) { return nodes_[static_cast<size_t>(id)].grad; }
  int size() const { return static_cast<int>(nodes_.size()); }
  bool backward_done() const { return ran_backward_; }

  // Used by op constructors; not part of the public surface.
  Tensor push(Matrix value, std::function<void(Tape&)> back);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void(Tape&)> back;
  };
  std::vector<Node> nodes_;
  bool ran_backward_ = false;
};

// ---- primitives ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise

// A (n x d) plus a row vector (1 x d) broadcast over rows.
Tensor add_rowvec(const Tensor& a, const Tensor& row);
// Row i of A scaled by w(i); w is n x 1.
Tensor colwise_scale(const Tensor& a, const Tensor& w);

Tensor scale(const Tensor& a, double c);
Tensor add_const(const Tensor& a, double c);

// Broadcast arithmetic with a learnable 1x1 scalar node.
Tensor mul_scalar(const Tensor& a, const Tensor& s);
Tensor div_scalar(const Tensor& a, const Tensor& s);  // s == 0 -> error
Tensor add_scalar(const Tensor& a, const Tensor& s);
Tensor sub_scalar(const Tensor& a, const Tensor& s);

Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);       // subgradient 0 at the hinge point
Tensor sqrt_elem(const Tensor& a);  // negative input -> error

// Softmax independently over each row.
Tensor softmax_rows(const Tensor& a);

// cos(x_j, p_i) for every row pair: (n x d, N x d) -> n x N.
// Zero rows on either side are rejected.
Tensor cosine_rows(const Tensor& x, const Tensor& p);
// Cosine of two equal-length row vectors -> 1x1.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);

Tensor sum_all(const Tensor& a);       // 1x1
Tensor mean_rows(const Tensor& a);     // column means, 1 x cols
Tensor frobenius_sq(const Tensor& a);  // 1x1
// Mean squared difference over all elements -> 1x1.
Tensor mse(const Tensor& pred, const Tensor& target);

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count);
Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count);

// sqrt of the squared Frobenius norm -> 1x1 (zero gets subgradient 0).
Tensor l2_norm(const Tensor& a);

}  // namespace ad
}  // namespace driftmeta
