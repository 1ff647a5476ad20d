// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

// Feed-forward networks that produce distribution parameters.
//
// A network with several conditioning inputs (say y and z1) behaves as if
// the inputs were concatenated along the feature axis. Internally the first
// affine map multiplies each input with its own row block of one weight
// matrix, so an input shared by all K classes is multiplied once and then
// broadcast. Inputs may therefore have different row counts as long as each
// divides the largest one; rows are laid out example-major (row b*k + c).

#pragma once

#include <span>
#include <string>
#include <vector>

#include "cagem/autodiff.hpp"
#include "cagem/distributions.hpp"
#include "cagem/params.hpp"
#include "cagem/rng.hpp"

namespace cagem {

enum class BatchNormMode {
  TrainCollect,  // normalise with batch statistics, update running statistics
  EvalFrozen,    // normalise with running statistics, never mutate them
};

inline constexpr double kBatchNormMomentum = 0.9;
inline constexpr double kBatchNormEps = 1e-5;

/// Affine map over one or more inputs treated as concatenated.
class MultiLinear {
 public:
  MultiLinear() = default;
  MultiLinear(ParamStore& store, const std::string& name, std::vector<int> input_widths,
              int output_width, ParamGroup group, Rng& init_rng);

  ad::Var forward(ad::Tape& tape, ParamStore& store, const std::vector<ad::Var>& inputs) const;

  int input_width() const;
  int output_width() const { return output_width_; }
  int weight_index() const { return weight_; }
  int bias_index() const { return bias_; }

 private:
  std::vector<int> input_widths_;
  int output_width_ = 0;
  int weight_ = -1;
  int bias_ = -1;
};

/// affine -> batch-norm -> ReLU, repeated per hidden width.
class DenseStack {
 public:
  DenseStack() = default;
  DenseStack(ParamStore& store, const std::string& prefix, std::vector<int> input_widths,
             std::vector<int> hidden, ParamGroup group, bool batch_norm, Rng& init_rng);

  /// With no hidden layers the inputs are passed through untouched.
  std::vector<ad::Var> forward(ad::Tape& tape, ParamStore& store, const std::vector<ad::Var>& inputs,
                               BatchNormMode mode) const;

  /// Widths of the vectors forward() returns.
  std::vector<int> output_widths() const;
  std::size_t depth() const { return layers_.size(); }
  const MultiLinear& affine(std::size_t layer) const { return layers_.at(layer).affine; }
  bool batch_norm() const { return batch_norm_; }

 private:
  struct Layer {
    MultiLinear affine;
    int bn_scale = -1;
    int bn_shift = -1;
    int running_mean = -1;
    int running_var = -1;
  };
  std::vector<int> input_widths_;
  std::vector<Layer> layers_;
  bool batch_norm_ = true;
};

/// Single-input convenience over DenseStack::forward.
Matrix dense_forward(const DenseStack& net, ParamStore& store, const Matrix& input,
                     BatchNormMode mode);

/// One-hot rows for class indices; width k.
Matrix one_hot(std::span<const int> classes, int k);
/// Rows (b*k + c) hold one_hot(c) for every b < batch: the class input of a
/// network evaluated for all k classes of each example.
Matrix all_classes_one_hot(Eigen::Index batch, int k);

class GaussianHead {
 public:
  GaussianHead() = default;
  GaussianHead(ParamStore& store, const std::string& name, std::vector<int> input_widths,
               std::vector<int> hidden, int output_dim, ParamGroup group, bool batch_norm,
               Rng& init_rng);

  /// log_std is clamped to [kLogStdMin, kLogStdMax].
  GaussianVar forward(ad::Tape& tape, ParamStore& store, const std::vector<ad::Var>& inputs,
                      BatchNormMode mode) const;

  const DenseStack& trunk() const { return trunk_; }
  int output_dim() const { return mean_.output_width(); }
  const MultiLinear& mean_map() const { return mean_; }
  const MultiLinear& log_std_map() const { return log_std_; }

 private:
  DenseStack trunk_;
  MultiLinear mean_;
  MultiLinear log_std_;
};

/// Produces logits; the Bernoulli mean is sigmoid(logits).
class BernoulliHead {
 public:
  BernoulliHead() = default;
  BernoulliHead(ParamStore& store, const std::string& name, std::vector<int> input_widths,
                std::vector<int> hidden, int output_dim, ParamGroup group, bool batch_norm,
                Rng& init_rng);

  ad::Var logits(ad::Tape& tape, ParamStore& store, const std::vector<ad::Var>& inputs,
                 BatchNormMode mode) const;

  const DenseStack& trunk() const { return trunk_; }
  int output_dim() const { return out_.output_width(); }

 private:
  DenseStack trunk_;
  MultiLinear out_;
};

/// Produces row-wise log-probabilities (log-softmax of the logits).
class CategoricalHead {
 public:
  CategoricalHead() = default;
  CategoricalHead(ParamStore& store, const std::string& name, std::vector<int> input_widths,
                  std::vector<int> hidden, int classes, ParamGroup group, bool batch_norm,
                  Rng& init_rng);

  ad::Var log_probs(ad::Tape& tape, ParamStore& store, const std::vector<ad::Var>& inputs,
                    BatchNormMode mode) const;

  const DenseStack& trunk() const { return trunk_; }
  int classes() const { return out_.output_width(); }

 private:
  DenseStack trunk_;
  MultiLinear out_;
};

}  // namespace cagem
