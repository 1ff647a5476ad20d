// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

#include "cagem/optimizer.hpp"

#include <cmath>

#include "cagem/errors.hpp"

namespace cagem {

Adam::Adam(const ParamStore& store, AdamConfig config) : config_(config) {
  for (const auto& p : store.parameters()) {
    m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  }
}

void Adam::step(ParamStore& store, double lr) {
  auto& params = store.parameters();
  if (params.size() != m_.size()) throw DimensionError("adam: optimizer built for another store");
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  const double step = lr * std::sqrt(c2) / c1;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = params[i].grad;
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.cwiseProduct(g);
    params[i].value.array() -= step * m_[i].array() / (v_[i].array().sqrt() + config_.eps * std::sqrt(c2));
  }
}

}  // namespace cagem
