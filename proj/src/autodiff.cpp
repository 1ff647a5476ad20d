// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

#include "cagem/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "cagem/errors.hpp"

namespace cagem::ad {

namespace {

// Column sums of a row-major matrix, accumulated row by row so the inner
// loop runs over contiguous memory.
RowVector col_sums(const Matrix& a) {
  RowVector acc = RowVector::Zero(a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) acc += a.row(r);
  return acc;
}

// Sum of consecutive groups of k rows.
Matrix group_sums(const Matrix& a, Eigen::Index k) {
  Matrix out = Matrix::Zero(a.rows() / k, a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) out.row(r / k) += a.row(r);
  return out;
}

RowVector col_sums_product(const Matrix& a, const Matrix& b) {
  RowVector acc = RowVector::Zero(a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) acc += a.row(r).cwiseProduct(b.row(r));
  return acc;
}

}  // namespace


namespace {

void check_same_tape(Var a, Var b) {
  if (a.tape() != b.tape() || a.tape() == nullptr)
    throw DimensionError("autodiff: operands live on different tapes");
}

void check_same_shape(Var a, Var b, const char* op) {
  check_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string("autodiff: ") + op + " shape mismatch (" +
                         std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
}

template <typename F, typename D>
Var unary(Var a, F forward, D derivative) {
  Tape& t = *a.tape();
  Matrix out = a.value().unaryExpr(forward);
  const int ia = a.id();
  return t.record(std::move(out), {a}, [ia, derivative](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Matrix& x = t.value(ia);
    const Matrix& y = t.value(self);
    t.accumulate(ia, g.cwiseProduct(derivative(x, y)));
  });
}

}  // namespace

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), nullptr, nullptr, false});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::parameter(Parameter& param) {
  if (!record_gradients_) return constant(param.value);
  nodes_.push_back(Node{param.value, Matrix(), nullptr, &param, true});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, Backward fn) {
  bool needs = false;
  for (Var p : parents) {
    if (p.tape() != this) throw DimensionError("autodiff: operand from another tape");
    needs = needs || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), Matrix(), needs ? std::move(fn) : nullptr, nullptr, needs});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Matrix& Tape::grad_storage(int id) {
  Node& node = nodes_[id];
  if (node.grad.size() == 0) node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

void Tape::backward(Var out, double seed) {
  if (out.tape() != this) throw DimensionError("autodiff: backward on foreign node");
  if (out.rows() != 1 || out.cols() != 1)
    throw DimensionError("autodiff: backward needs a 1x1 output");
  for (auto& node : nodes_) node.grad.resize(0, 0);
  if (!nodes_[out.id()].requires_grad) return;
  nodes_[out.id()].grad = Matrix::Constant(1, 1, seed);
  for (int id = out.id(); id >= 0; --id) {
    Node& node = nodes_[id];
    if (node.grad.size() == 0) continue;
    if (node.backward) node.backward(*this, id);
    if (node.param) node.param->grad += node.grad;
  }
}

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  if (a.cols() != b.rows())
    throw DimensionError("autodiff: matmul inner dimensions " + std::to_string(a.cols()) +
                         " vs " + std::to_string(b.rows()));
  Tape& t = *a.tape();
  Matrix out = a.value() * b.value();
  const int ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var matmul_rows(Var a, Var w, Eigen::Index offset) {
  check_same_tape(a, w);
  const Eigen::Index n = a.cols();
  if (offset < 0 || offset + n > w.rows())
    throw DimensionError("autodiff: matmul_rows block [" + std::to_string(offset) + ", " +
                         std::to_string(offset + n) + ") outside weight with " +
                         std::to_string(w.rows()) + " rows");
  Tape& t = *a.tape();
  Matrix out = a.value() * w.value().middleRows(offset, n);
  const int ia = a.id(), iw = w.id();
  return t.record(std::move(out), {a, w}, [ia, iw, offset, n](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(iw).middleRows(offset, n).transpose());
    if (t.requires_grad(iw))
      t.grad_storage(iw).middleRows(offset, n).noalias() += t.value(ia).transpose() * g;
  });
}

Var add(Var a, Var b) {
  check_same_shape(a, b, "add");
  Tape& t = *a.tape();
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, t.grad(self));
  });
}

Var sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  Tape& t = *a.tape();
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, -t.grad(self));
  });
}

Var mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  Tape& t = *a.tape();
  const int ia = a.id(), ib = b.id();
  return t.record(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

Var add_row(Var a, Var row) {
  check_same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols())
    throw DimensionError("autodiff: add_row expects a 1x" + std::to_string(a.cols()) + " row");
  Tape& t = *a.tape();
  Matrix out = a.value().rowwise() + row.value().row(0);
  const int ia = a.id(), ir = row.id();
  return t.record(std::move(out), {a, row}, [ia, ir](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    t.accumulate(ia, g);
    if (t.requires_grad(ir)) t.accumulate(ir, col_sums(g));
  });
}

Var mul_col(Var a, Var col) {
  check_same_tape(a, col);
  if (col.cols() != 1 || col.rows() != a.rows())
    throw DimensionError("autodiff: mul_col expects a " + std::to_string(a.rows()) + "x1 column");
  Tape& t = *a.tape();
  Matrix out = a.value().array().colwise() * col.value().col(0).array();
  const int ia = a.id(), ic = col.id();
  return t.record(std::move(out), {a, col}, [ia, ic](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) {
      Matrix ga = g.array().colwise() * t.value(ic).col(0).array();
      t.accumulate(ia, ga);
    }
    if (t.requires_grad(ic)) t.accumulate(ic, g.cwiseProduct(t.value(ia)).rowwise().sum());
  });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape();
  const int ia = a.id();
  return t.record(a.value() * s, {a}, [ia, s](Tape& t, int self) { t.accumulate(ia, t.grad(self) * s); });
}

Var add_scalar(Var a, double s) {
  Tape& t = *a.tape();
  const int ia = a.id();
  Matrix out = a.value().array() + s;
  return t.record(std::move(out), {a}, [ia](Tape& t, int self) { t.accumulate(ia, t.grad(self)); });
}

Var exp(Var a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](const Matrix&, const Matrix& y) { return y; });
}

Var log(Var a) {
  return unary(
      a, [](double x) { return std::log(x); },
      [](const Matrix& x, const Matrix&) { return Matrix(x.cwiseInverse()); });
}

Var square(Var a) {
  return unary(
      a, [](double x) { return x * x; }, [](const Matrix& x, const Matrix&) { return Matrix(2.0 * x); });
}

Var relu(Var a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](const Matrix& x, const Matrix&) {
        return Matrix(x.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
      });
}

Var sigmoid(Var a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](const Matrix&, const Matrix& y) { return Matrix(y.array() * (1.0 - y.array())); });
}

Var log_sigmoid(Var a) {
  return unary(
      a, [](double x) { return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x))); },
      [](const Matrix& x, const Matrix&) {
        return Matrix(x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(v)); }));
      });
}

Var clamp(Var a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](const Matrix& x, const Matrix&) {
        return Matrix(x.unaryExpr([lo, hi](double v) { return (v >= lo && v <= hi) ? 1.0 : 0.0; }));
      });
}

Var bernoulli_logits_log_prob(Var x, Var logits, double max_logit) {
  check_same_shape(x, logits, "bernoulli_logits_log_prob");
  Tape& t = *x.tape();
  const Eigen::ArrayXXd l = logits.value().array().max(-max_logit).min(max_logit);
  // log(1 + e^l) = max(l, 0) + log1p(e^-|l|)
  const Eigen::ArrayXXd per = x.value().array() * l - l.max(0.0) - (-l.abs()).exp().log1p();
  Matrix out(per.rows(), 1);
  for (Eigen::Index r = 0; r < per.rows(); ++r) out(r, 0) = per.row(r).sum();
  const int ix = x.id(), il = logits.id();
  return t.record(std::move(out), {x, logits}, [ix, il, max_logit](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const auto lv = t.value(il).array();
    if (t.requires_grad(il)) {
      const auto inside = (lv >= -max_logit && lv <= max_logit).cast<double>();
      Matrix d = ((t.value(ix).array() - 1.0 / (1.0 + (-lv).exp())) * inside).matrix();
      for (Eigen::Index r = 0; r < d.rows(); ++r) d.row(r) *= g(r, 0);
      t.accumulate(il, std::move(d));
    }
    if (t.requires_grad(ix)) {
      Matrix d = lv.max(-max_logit).min(max_logit).matrix();
      for (Eigen::Index r = 0; r < d.rows(); ++r) d.row(r) *= g(r, 0);
      t.accumulate(ix, std::move(d));
    }
  });
}

Var log_softmax(Var a) {
  Tape& t = *a.tape();
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    const double lse = m + std::log((x.row(r).array() - m).exp().sum());
    out.row(r) = x.row(r).array() - lse;
  }
  const int ia = a.id();
  return t.record(std::move(out), {a}, [ia](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Matrix p = t.value(self).array().exp();
    Matrix d = g - (p.array().colwise() * g.rowwise().sum().array()).matrix();
    t.accumulate(ia, std::move(d));
  });
}

Var sum_cols(Var a) {
  Tape& t = *a.tape();
  const int ia = a.id();
  const Eigen::Index cols = a.cols();
  Matrix out = a.value().rowwise().sum();
  return t.record(std::move(out), {a}, [ia, cols](Tape& t, int self) {
    t.accumulate(ia, t.grad(self).replicate(1, cols));
  });
}

Var sum(Var a) {
  Tape& t = *a.tape();
  const int ia = a.id();
  const Eigen::Index rows = a.rows(), cols = a.cols();
  Matrix out = Matrix::Constant(1, 1, a.value().sum());
  return t.record(std::move(out), {a}, [ia, rows, cols](Tape& t, int self) {
    t.accumulate(ia, Matrix::Constant(rows, cols, t.grad(self)(0, 0)));
  });
}

Var mean(Var a) {
  if (a.value().size() == 0) throw DimensionError("autodiff: mean of empty matrix");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var add_repeated(Var big, Var small, Eigen::Index k) {
  check_same_tape(big, small);
  if (k < 1 || small.rows() * k != big.rows() || small.cols() != big.cols())
    throw DimensionError("autodiff: add_repeated shape mismatch");
  Tape& t = *big.tape();
  Matrix out = big.value();
  const Matrix& sv = small.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) out.row(r) += sv.row(r / k);
  const int ib = big.id(), is = small.id();
  return t.record(std::move(out), {big, small}, [ib, is, k](Tape& t, int self) {
    t.accumulate(ib, t.grad(self));
    if (t.requires_grad(is)) t.accumulate(is, group_sums(t.grad(self), k));
  });
}

Var repeat_rows(Var a, Eigen::Index k) {
  if (k < 1) throw DimensionError("autodiff: repeat_rows needs k >= 1");
  if (k == 1) return a;
  Tape& t = *a.tape();
  const Matrix& x = a.value();
  Matrix out(x.rows() * k, x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) out.middleRows(r * k, k) = x.row(r).replicate(k, 1);
  const int ia = a.id();
  return t.record(std::move(out), {a}, [ia, k](Tape& t, int self) {
    t.accumulate(ia, group_sums(t.grad(self), k));
  });
}

Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size())
    throw DimensionError("autodiff: reshape to " + std::to_string(rows) + "x" +
                         std::to_string(cols) + " from size " + std::to_string(a.value().size()));
  Tape& t = *a.tape();
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  const int ia = a.id();
  const Eigen::Index r0 = a.rows(), c0 = a.cols();
  return t.record(std::move(out), {a}, [ia, r0, c0](Tape& t, int self) {
    t.accumulate(ia, Eigen::Map<const Matrix>(t.grad(self).data(), r0, c0));
  });
}

Var sum_row_groups(Var a, Eigen::Index k) {
  if (k < 1 || a.rows() % k != 0)
    throw DimensionError("autodiff: sum_row_groups group size does not divide rows");
  Tape& t = *a.tape();
  const Matrix& x = a.value();
  Matrix out = group_sums(x, k);
  const int ia = a.id();
  return t.record(std::move(out), {a}, [ia, k](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Matrix d(g.rows() * k, g.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) d.middleRows(r * k, k) = g.row(r).replicate(k, 1);
    t.accumulate(ia, std::move(d));
  });
}

Var stop_gradient(Var a) { return a.tape()->constant(a.value()); }

Var batch_norm_train(Var x, Var gamma, Var beta, double eps, RowVector* batch_mean,
                     RowVector* batch_var, bool relu) {
  check_same_tape(x, gamma);
  check_same_tape(x, beta);
  const Eigen::Index n = x.rows();
  if (n < 2) throw DimensionError("batch norm: degenerate batch, statistics need at least 2 rows");
  const Matrix& v = x.value();
  const RowVector mu = col_sums(v) / static_cast<double>(n);
  Matrix xhat = v.rowwise() - mu;
  const RowVector var = col_sums_product(xhat, xhat) / static_cast<double>(n);
  const RowVector inv_std = (var.array() + eps).rsqrt();
  xhat.array().rowwise() *= inv_std.array();
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
               beta.value().row(0).array();
  if (relu) out = out.cwiseMax(0.0);
  if (batch_mean) *batch_mean = mu;
  if (batch_var) *batch_var = var;
  Tape& t = *x.tape();
  const int ix = x.id(), ig = gamma.id(), ib = beta.id();
  return t.record(std::move(out), {x, gamma, beta},
                  [ix, ig, ib, n, relu, xhat = std::move(xhat), inv_std](Tape& t, int self) {
                    Matrix g = t.grad(self);
                    if (relu) g = (t.value(self).array() > 0.0).select(g, 0.0);
                    if (t.requires_grad(ib)) t.accumulate(ib, col_sums(g));
                    if (t.requires_grad(ig)) t.accumulate(ig, col_sums_product(g, xhat));
                    if (!t.requires_grad(ix)) return;
                    g.array().rowwise() *= t.value(ig).row(0).array();  // d xhat
                    const RowVector sum_d = col_sums(g);
                    const RowVector sum_dx = col_sums_product(g, xhat);
                    const RowVector scale = inv_std / static_cast<double>(n);
                    for (Eigen::Index r = 0; r < g.rows(); ++r)
                      g.row(r) = (static_cast<double>(n) * g.row(r) - sum_d -
                                  xhat.row(r).cwiseProduct(sum_dx))
                                     .cwiseProduct(scale);
                    t.accumulate(ix, std::move(g));
                  });
}

Var batch_norm_frozen(Var x, Var gamma, Var beta, const RowVector& mean, const RowVector& var,
                      double eps, bool relu) {
  check_same_tape(x, gamma);
  check_same_tape(x, beta);
  const RowVector inv_std = (var.array() + eps).rsqrt();
  const RowVector a = gamma.value().row(0).cwiseProduct(inv_std);
  Matrix xhat = (x.value().rowwise() - mean).array().rowwise() * inv_std.array();
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
               beta.value().row(0).array();
  if (relu) out = out.cwiseMax(0.0);
  Tape& t = *x.tape();
  const int ix = x.id(), ig = gamma.id(), ib = beta.id();
  if (!t.requires_grad(ix) && !t.requires_grad(ig) && !t.requires_grad(ib))
    return t.record(std::move(out), {x, gamma, beta}, nullptr);
  return t.record(std::move(out), {x, gamma, beta},
                  [ix, ig, ib, a, relu, xhat = std::move(xhat)](Tape& t, int self) {
                    Matrix g = t.grad(self);
                    if (relu) g = (t.value(self).array() > 0.0).select(g, 0.0);
                    if (t.requires_grad(ib)) t.accumulate(ib, col_sums(g));
                    if (t.requires_grad(ig)) t.accumulate(ig, col_sums_product(g, xhat));
                    if (t.requires_grad(ix)) {
                      g.array().rowwise() *= a.array();
                      t.accumulate(ix, std::move(g));
                    }
                  });
}

}  // namespace cagem::ad
