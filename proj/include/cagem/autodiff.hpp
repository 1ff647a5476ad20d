// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

// Minimal tape-based reverse-mode differentiation over row-major matrices.
//
// A Tape records every intermediate value together with a closure that
// pushes the output gradient back into its parents. Leaves are either
// constants (never receive gradient) or parameters of a ParamStore (the
// gradient is added into Parameter::grad when backward() reaches them).
// A node only records a closure when at least one parent needs a gradient,
// so data, noise and stop_gradient() results cost nothing on the way back.

#pragma once

#include <functional>
#include <vector>

#include "cagem/params.hpp"
#include "cagem/tensor.hpp"

namespace cagem::ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  /// Only meaningful for 1x1 nodes.
  double scalar() const { return value()(0, 0); }

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  // The closure receives the tape and the id of the node being processed.
  using Backward = std::function<void(Tape&, int)>;

  /// With record_gradients = false parameters enter as constants and no
  /// backward closures are kept (evaluation passes).
  explicit Tape(bool record_gradients = true) : record_gradients_(record_gradients) {
    nodes_.reserve(512);
  }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var parameter(Parameter& param);

  /// Append an op node. `fn` is dropped when no parent requires a gradient.
  Var record(Matrix value, std::initializer_list<Var> parents, Backward fn);

  const Matrix& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  /// Gradient accumulated so far at node `id` (empty matrix if untouched).
  const Matrix& grad(int id) const { return nodes_[id].grad; }
  const Matrix& grad(Var v) const { return grad(v.id()); }

  /// Add `delta` into the gradient of `id` if that node needs one.
  template <typename Expr>
  void accumulate(int id, const Expr& delta) {
    Node& node = nodes_[id];
    if (!node.requires_grad) return;
    if (node.grad.size() == 0)
      node.grad = delta;
    else
      node.grad += delta;
  }

  void accumulate(int id, Matrix&& delta) {
    Node& node = nodes_[id];
    if (!node.requires_grad) return;
    if (node.grad.size() == 0)
      node.grad = std::move(delta);
    else
      node.grad += delta;
  }

  /// Zero-initialised gradient storage of a node that requires a gradient,
  /// for ops that scatter into a sub-block.
  Matrix& grad_storage(int id);

  /// Reverse sweep from a 1x1 output, seeding d(out)/d(out) = seed.
  void backward(Var out, double seed = 1.0);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  bool record_gradients_ = true;
};

// ---- ops -----------------------------------------------------------------

Var matmul(Var a, Var b);
/// a * w.middleRows(offset, a.cols()); the multi-input first layer of a
/// network multiplies each input with its own block of one weight matrix.
Var matmul_rows(Var a, Var w, Eigen::Index offset);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// a (n x m) + row (1 x m) broadcast over rows.
Var add_row(Var a, Var row);
/// a (n x m) scaled row-wise by col (n x 1).
Var mul_col(Var a, Var col);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);

Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var relu(Var a);
Var sigmoid(Var a);
/// log(sigmoid(a)) computed without overflow.
Var log_sigmoid(Var a);
/// Hard clamp; gradient is zero where the input lies outside [lo, hi].
Var clamp(Var a, double lo, double hi);
/// Per-row sum of x * l - log(1 + exp(l)) with l = clamp(logits, -+max_logit);
/// the Bernoulli log-likelihood of x under the given logits, as one fused
/// node. Gradient is zero where the logit was clamped.
Var bernoulli_logits_log_prob(Var x, Var logits, double max_logit);
/// Row-wise log-softmax.
Var log_softmax(Var a);

/// Sum over columns: (n x m) -> (n x 1).
Var sum_cols(Var a);
/// Sum of all entries -> 1x1.
Var sum(Var a);
Var mean(Var a);

/// big + repeat_rows(small, k) without materialising the repetition.
Var add_repeated(Var big, Var small, Eigen::Index k);
/// Row i of `a` becomes rows i*k .. i*k+k-1 of the result.
Var repeat_rows(Var a, Eigen::Index k);
/// Row-major reinterpretation; rows*cols must equal the input size.
Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);
/// Sum of consecutive groups of k rows: (n*k x m) -> (n x m).
Var sum_row_groups(Var a, Eigen::Index k);

/// Copy of the value as a constant leaf.
Var stop_gradient(Var a);

/// Batch normalization with statistics of the current batch. The batch mean
/// and biased variance are written to `batch_mean` / `batch_var`. With
/// `relu` set the output is passed through a ReLU inside the same node.
Var batch_norm_train(Var x, Var gamma, Var beta, double eps, RowVector* batch_mean,
                     RowVector* batch_var, bool relu = false);
/// Batch normalization with fixed statistics.
Var batch_norm_frozen(Var x, Var gamma, Var beta, const RowVector& mean, const RowVector& var,
                      double eps, bool relu = false);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator-(Var a) { return scale(a, -1.0); }
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator*(Var a, double s) { return scale(a, s); }
inline Var operator+(Var a, double s) { return add_scalar(a, s); }
inline Var operator-(Var a, double s) { return add_scalar(a, -s); }

}  // namespace cagem::ad
