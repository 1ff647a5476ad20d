// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "cagem/tensor.hpp"

namespace cagem {

/// Explicit random stream. Every sampler in the library takes one of these
/// (or pre-drawn noise); there is no global generator.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  std::uint64_t next_u64() { return engine_(); }

  Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols);

  /// Derive an independent stream, e.g. one per evaluation pass, without
  /// advancing this one.
  static Rng derive(std::uint64_t seed, std::uint64_t stream);

  std::mt19937_64& engine() { return engine_; }

  /// Text form of the complete generator state, for checkpoints.
  std::string serialize() const;
  void deserialize(const std::string& state);

  bool operator==(const Rng& other) const;

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace cagem
