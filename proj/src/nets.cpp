// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

#include "cagem/nets.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "cagem/errors.hpp"

namespace cagem {

namespace {

Matrix glorot_uniform(int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix w(fan_in, fan_out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = (2.0 * rng.uniform() - 1.0) * limit;
  return w;
}

}  // namespace

MultiLinear::MultiLinear(ParamStore& store, const std::string& name, std::vector<int> input_widths,
                         int output_width, ParamGroup group, Rng& init_rng)
    : input_widths_(std::move(input_widths)), output_width_(output_width) {
  if (input_widths_.empty()) throw ConfigError(name + ": affine map needs at least one input");
  for (int w : input_widths_)
    if (w < 1) throw ConfigError(name + ": input widths must be >= 1");
  if (output_width < 1) throw ConfigError(name + ": output width must be >= 1");
  const int fan_in = input_width();
  weight_ = store.add_parameter(name + ".weight", group, glorot_uniform(fan_in, output_width, init_rng));
  bias_ = store.add_parameter(name + ".bias", group, Matrix::Zero(1, output_width));
}

int MultiLinear::input_width() const {
  return std::accumulate(input_widths_.begin(), input_widths_.end(), 0);
}

ad::Var MultiLinear::forward(ad::Tape& tape, ParamStore& store,
                             const std::vector<ad::Var>& inputs) const {
  if (inputs.size() != input_widths_.size())
    throw DimensionError("affine map expects " + std::to_string(input_widths_.size()) +
                         " inputs, got " + std::to_string(inputs.size()));
  Eigen::Index rows = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].cols() != input_widths_[i])
      throw DimensionError("affine map input " + std::to_string(i) + " has width " +
                           std::to_string(inputs[i].cols()) + ", expected " +
                           std::to_string(input_widths_[i]) + " (concatenated width " +
                           std::to_string(input_width()) + ")");
    rows = std::max(rows, inputs[i].rows());
  }
  const ad::Var w = tape.parameter(store.parameter(weight_));
  // Partial products grouped by row count, then broadcast to the full batch.
  std::map<Eigen::Index, ad::Var> partial;
  Eigen::Index offset = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Eigen::Index r = inputs[i].rows();
    if (r == 0 || rows % r != 0)
      throw DimensionError("affine map input " + std::to_string(i) + " has " + std::to_string(r) +
                           " rows, which does not divide " + std::to_string(rows));
    ad::Var p = ad::matmul_rows(inputs[i], w, offset);
    auto it = partial.find(r);
    if (it == partial.end())
      partial.emplace(r, p);
    else
      it->second = it->second + p;
    offset += input_widths_[i];
  }
  // The full-height group (if any) absorbs the others by broadcasting.
  ad::Var out;
  auto full = partial.find(rows);
  if (full != partial.end()) out = full->second;
  for (auto& [r, p] : partial) {
    if (r == rows) continue;
    out = out.valid() ? ad::add_repeated(out, p, rows / r) : ad::repeat_rows(p, rows / r);
  }
  return ad::add_row(out, tape.parameter(store.parameter(bias_)));
}

DenseStack::DenseStack(ParamStore& store, const std::string& prefix, std::vector<int> input_widths,
                       std::vector<int> hidden, ParamGroup group, bool batch_norm, Rng& init_rng)
    : input_widths_(std::move(input_widths)), batch_norm_(batch_norm) {
  std::vector<int> widths = input_widths_;
  for (std::size_t l = 0; l < hidden.size(); ++l) {
    const std::string name = prefix + "." + std::to_string(l);
    Layer layer;
    layer.affine = MultiLinear(store, name, widths, hidden[l], group, init_rng);
    if (batch_norm_) {
      layer.bn_scale = store.add_parameter(name + ".bn.scale", group, Matrix::Ones(1, hidden[l]));
      layer.bn_shift = store.add_parameter(name + ".bn.shift", group, Matrix::Zero(1, hidden[l]));
      layer.running_mean = store.add_buffer(name + ".bn.running_mean", Matrix::Zero(1, hidden[l]));
      layer.running_var = store.add_buffer(name + ".bn.running_var", Matrix::Ones(1, hidden[l]));
    }
    layers_.push_back(layer);
    widths = {hidden[l]};
  }
}

std::vector<int> DenseStack::output_widths() const {
  if (layers_.empty()) return input_widths_;
  return {layers_.back().affine.output_width()};
}

std::vector<ad::Var> DenseStack::forward(ad::Tape& tape, ParamStore& store,
                                         const std::vector<ad::Var>& inputs, BatchNormMode mode) const {
  std::vector<ad::Var> h(inputs.begin(), inputs.end());
  for (const Layer& layer : layers_) {
    ad::Var a = layer.affine.forward(tape, store, h);
    if (batch_norm_) {
      const ad::Var gamma = tape.parameter(store.parameter(layer.bn_scale));
      const ad::Var beta = tape.parameter(store.parameter(layer.bn_shift));
      Matrix& running_mean = store.buffer(layer.running_mean).value;
      Matrix& running_var = store.buffer(layer.running_var).value;
      if (mode == BatchNormMode::TrainCollect) {
        RowVector mu, var;
        a = ad::batch_norm_train(a, gamma, beta, kBatchNormEps, &mu, &var, true);
        const double n = static_cast<double>(a.rows());
        running_mean = kBatchNormMomentum * running_mean + (1.0 - kBatchNormMomentum) * mu;
        running_var = kBatchNormMomentum * running_var + (1.0 - kBatchNormMomentum) * (var * (n / (n - 1.0)));
      } else {
        a = ad::batch_norm_frozen(a, gamma, beta, running_mean.row(0), running_var.row(0),
                                  kBatchNormEps, true);
      }
      h = {a};
    } else {
      h = {ad::relu(a)};
    }
  }
  return h;
}

Matrix dense_forward(const DenseStack& net, ParamStore& store, const Matrix& input,
                     BatchNormMode mode) {
  ad::Tape tape;
  const ad::Var x = tape.constant(input);
  const auto out = net.forward(tape, store, {x}, mode);
  if (out.size() != 1) throw DimensionError("dense_forward: network has no hidden layers");
  return out.front().value();
}

Matrix one_hot(std::span<const int> classes, int k) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(classes.size()), k);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] < 0 || classes[i] >= k)
      throw DomainError("one_hot: class " + std::to_string(classes[i]) + " outside [0, " +
                        std::to_string(k) + ")");
    out(static_cast<Eigen::Index>(i), classes[i]) = 1.0;
  }
  return out;
}

Matrix all_classes_one_hot(Eigen::Index batch, int k) {
  Matrix out = Matrix::Zero(batch * k, k);
  for (Eigen::Index b = 0; b < batch; ++b)
    for (int c = 0; c < k; ++c) out(b * k + c, c) = 1.0;
  return out;
}

GaussianHead::GaussianHead(ParamStore& store, const std::string& name, std::vector<int> input_widths,
                           std::vector<int> hidden, int output_dim, ParamGroup group,
                           bool batch_norm, Rng& init_rng)
    : trunk_(store, name + ".trunk", std::move(input_widths), std::move(hidden), group, batch_norm,
             init_rng) {
  mean_ = MultiLinear(store, name + ".mean", trunk_.output_widths(), output_dim, group, init_rng);
  log_std_ = MultiLinear(store, name + ".log_std", trunk_.output_widths(), output_dim, group, init_rng);
  // Start every head at unit standard deviation. Glorot-scale log_std maps put
  // a few outputs near exp(+-5) at initialization; the resulting outlier
  // samples dominate the batch statistics of the next batch-normalized trunk.
  store.parameter(log_std_.weight_index()).value.setZero();
}

GaussianVar GaussianHead::forward(ad::Tape& tape, ParamStore& store,
                                  const std::vector<ad::Var>& inputs, BatchNormMode mode) const {
  const auto d = trunk_.forward(tape, store, inputs, mode);
  return {mean_.forward(tape, store, d),
          ad::clamp(log_std_.forward(tape, store, d), kLogStdMin, kLogStdMax)};
}

BernoulliHead::BernoulliHead(ParamStore& store, const std::string& name,
                             std::vector<int> input_widths, std::vector<int> hidden, int output_dim,
                             ParamGroup group, bool batch_norm, Rng& init_rng)
    : trunk_(store, name + ".trunk", std::move(input_widths), std::move(hidden), group, batch_norm,
             init_rng) {
  out_ = MultiLinear(store, name + ".logits", trunk_.output_widths(), output_dim, group, init_rng);
}

ad::Var BernoulliHead::logits(ad::Tape& tape, ParamStore& store, const std::vector<ad::Var>& inputs,
                              BatchNormMode mode) const {
  return out_.forward(tape, store, trunk_.forward(tape, store, inputs, mode));
}

CategoricalHead::CategoricalHead(ParamStore& store, const std::string& name,
                                 std::vector<int> input_widths, std::vector<int> hidden,
                                 int classes, ParamGroup group, bool batch_norm, Rng& init_rng)
    : trunk_(store, name + ".trunk", std::move(input_widths), std::move(hidden), group, batch_norm,
             init_rng) {
  out_ = MultiLinear(store, name + ".logits", trunk_.output_widths(), classes, group, init_rng);
}

ad::Var CategoricalHead::log_probs(ad::Tape& tape, ParamStore& store,
                                   const std::vector<ad::Var>& inputs, BatchNormMode mode) const {
  return ad::log_softmax(out_.forward(tape, store, trunk_.forward(tape, store, inputs, mode)));
}

}  // namespace cagem
