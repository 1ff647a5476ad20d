// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

#include "cagem/rng.hpp"

#include <sstream>

#include "cagem/errors.hpp"

namespace cagem {

Matrix Rng::normal_matrix(Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal();
  return m;
}

Rng Rng::derive(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x9e3779b9u};
  Rng rng;
  rng.engine_.seed(seq);
  return rng;
}

std::string Rng::serialize() const {
  std::ostringstream out;
  out << engine_ << ' ' << normal_ << ' ' << uniform_;
  return out.str();
}

void Rng::deserialize(const std::string& state) {
  std::istringstream in(state);
  in >> engine_ >> normal_ >> uniform_;
  if (!in) throw FormatError("rng: malformed generator state");
}

bool Rng::operator==(const Rng& other) const {
  return engine_ == other.engine_ && normal_ == other.normal_ && uniform_ == other.uniform_;
}

}  // namespace cagem
