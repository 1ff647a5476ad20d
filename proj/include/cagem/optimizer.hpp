// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "cagem/params.hpp"

namespace cagem {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moments are kept per parameter of the store
/// it was created for.
class Adam {
 public:
  Adam() = default;
  explicit Adam(const ParamStore& store, AdamConfig config = {});

  /// Descent step on the gradients currently held in `store`.
  void step(ParamStore& store, double lr);

  std::int64_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }

  std::vector<Matrix>& first_moments() { return m_; }
  std::vector<Matrix>& second_moments() { return v_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }
  void set_steps(std::int64_t steps) { steps_ = steps; }

 private:
  AdamConfig config_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::int64_t steps_ = 0;
};

}  // namespace cagem
