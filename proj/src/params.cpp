// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

#include "cagem/params.hpp"

#include "cagem/errors.hpp"

namespace cagem {

const char* to_string(ParamGroup group) {
  switch (group) {
    case ParamGroup::Theta: return "theta";
    case ParamGroup::ThetaY: return "theta_y";
    case ParamGroup::Phi: return "phi";
    case ParamGroup::PhiY: return "phi_y";
  }
  return "?";
}

int ParamStore::add_parameter(std::string name, ParamGroup group, Matrix init) {
  if (parameter_index_.count(name) || buffer_index_.count(name))
    throw ConfigError("param store: duplicate name '" + name + "'");
  const int index = static_cast<int>(parameters_.size());
  parameter_index_.emplace(name, index);
  Matrix grad = Matrix::Zero(init.rows(), init.cols());
  parameters_.push_back({std::move(name), group, std::move(init), std::move(grad)});
  return index;
}

int ParamStore::add_buffer(std::string name, Matrix init) {
  if (parameter_index_.count(name) || buffer_index_.count(name))
    throw ConfigError("param store: duplicate name '" + name + "'");
  const int index = static_cast<int>(buffers_.size());
  buffer_index_.emplace(name, index);
  buffers_.push_back({std::move(name), std::move(init)});
  return index;
}

int ParamStore::find_parameter(std::string_view name) const {
  auto it = parameter_index_.find(std::string(name));
  return it == parameter_index_.end() ? -1 : it->second;
}

int ParamStore::find_buffer(std::string_view name) const {
  auto it = buffer_index_.find(std::string(name));
  return it == buffer_index_.end() ? -1 : it->second;
}

std::vector<int> ParamStore::group_indices(ParamGroup group) const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(parameters_.size()); ++i)
    if (parameters_[i].group == group) out.push_back(i);
  return out;
}

void ParamStore::zero_grad() {
  for (auto& p : parameters_) p.grad.setZero();
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

}  // namespace cagem
