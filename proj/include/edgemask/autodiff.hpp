#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "edgemask/tensor.hpp"

namespace edgemask::ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid as long as its tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Matrix& value() const;
  /// Accumulated gradient; a zero matrix of the value's shape when nothing flowed back.
  Matrix grad() const;
  bool requires_grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-accumulation tape over dense matrices. Nodes are recorded in creation order, which
/// is a topological order, and backward() walks them in reverse.
///
/// Nodes that do not depend on any gradient-requiring leaf store no backward closure, so a tape
/// holding only constants doubles as a plain forward evaluator.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Matrix value, bool requires_grad = true);
  Var constant(Matrix value) { return leaf(std::move(value), false); }

  /// Records an op result. `fn` is kept only when some parent requires a gradient.
  Var push(Matrix value, std::initializer_list<Var> parents, BackwardFn fn);

  /// Seeds d(root)/d(root) = 1 for a 1x1 root, or `seed` for any shape, and back-propagates.
  void backward(Var root);
  void backward(Var root, const Matrix& seed);
  void zero_grad();

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  template <typename Derived>
  void accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// Elementwise and linear algebra.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);                 // elementwise, same shape
Var scale(Var a, double c);
Var add_row(Var a, Var row);           // a (n x k) + row (1 x k) broadcast over rows
Var scale_rows(Var a, Var col);        // a (n x k) * col (n x 1) broadcast over columns
Var matmul(Var a, Var b);              // a * b
Var matmul_nt(Var a, Var b);           // a * b^T

// Activations.
Var relu(Var a);
Var elu(Var a);
Var leaky_relu(Var a, double slope);
Var sigmoid(Var a);

// Shape manipulation.
Var slice_cols(Var a, Index begin, Index count);
Var concat_cols(Var a, Var b);
Var concat_rows(Var a, Var b);
Var gather_rows(Var a, std::span<const Index> idx);
Var scatter_add_rows(Var a, std::span<const Index> idx, Index num_rows);

// Multi-head helpers. A head-stacked matrix has H blocks of width d side by side.
Var head_dot(Var z, Var attn);         // z (n x H*d), attn (H x d) -> (n x H)
Var head_scale(Var z, Var coef);       // z (m x H*d), coef (m x H) -> (m x H*d)
Var head_mean(Var z, Index heads);     // z (n x H*d) -> (n x d)

/// Column-wise softmax within groups of rows sharing a segment id.
Var segment_softmax(Var logits, std::span<const Index> segment, Index num_segments);

// Reductions.
Var sum_all(Var a);
Var mean_all(Var a);

/// Mean cross-entropy over rows whose label is not kUnlabeled. Throws when no row is labeled.
Var cross_entropy(Var logits, std::span<const int> labels);

/// Plain (tape-free) softmax of each segment, used by tests and by the segment op itself.
Matrix segment_softmax_values(const Matrix& logits, std::span<const Index> segment, Index num_segments);

}  // namespace edgemask::ad
