// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cagem/tensor.hpp"

namespace cagem {

// The four disjoint parameter groups. ThetaY holds exactly the p(y|z2)
// head, PhiY exactly the q(y|z1,x) head; the rest of the generative and
// inference networks fall into Theta and Phi.
enum class ParamGroup { Theta, ThetaY, Phi, PhiY };

const char* to_string(ParamGroup group);

struct Parameter {
  std::string name;
  ParamGroup group;
  Matrix value;
  Matrix grad;
};

// Non-trainable state such as batch-norm running statistics.
struct Buffer {
  std::string name;
  Matrix value;
};

/// Named, ordered collection of every trainable array and buffer of a model.
/// Indices are stable for the lifetime of the store and survive copies.
class ParamStore {
 public:
  int add_parameter(std::string name, ParamGroup group, Matrix init);
  int add_buffer(std::string name, Matrix init);

  Parameter& parameter(int index) { return parameters_.at(index); }
  const Parameter& parameter(int index) const { return parameters_.at(index); }
  Buffer& buffer(int index) { return buffers_.at(index); }
  const Buffer& buffer(int index) const { return buffers_.at(index); }

  /// -1 when absent.
  int find_parameter(std::string_view name) const;
  int find_buffer(std::string_view name) const;

  std::vector<Parameter>& parameters() { return parameters_; }
  const std::vector<Parameter>& parameters() const { return parameters_; }
  std::vector<Buffer>& buffers() { return buffers_; }
  const std::vector<Buffer>& buffers() const { return buffers_; }

  std::vector<int> group_indices(ParamGroup group) const;
  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::vector<Parameter> parameters_;
  std::vector<Buffer> buffers_;
  std::unordered_map<std::string, int> parameter_index_;
  std::unordered_map<std::string, int> buffer_index_;
};

}  // namespace cagem
