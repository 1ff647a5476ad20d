// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "cagem/autodiff.hpp"
#include "cagem/model.hpp"
#include "cagem/rng.hpp"

namespace testing {

/// Small cluster-aware or VAE config for fast tests.
inline cagem::ModelConfig toy_config(cagem::Variant v, int x_dim = 6, int k = 3,
                                     std::vector<int> hidden = {5}, bool bn = false) {
  cagem::ModelConfig c;
  c.variant = v;
  c.x_dim = x_dim;
  c.z1_dim = 2;
  c.z2_dim = 2;
  c.clusters = k;
  c.hidden = std::move(hidden);
  c.batch_norm = bn;
  return c;
}

inline cagem::Matrix random_binary(long rows, long cols, cagem::Rng& rng) {
  cagem::Matrix m(rows, cols);
  for (long i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
  return m;
}

/// Perturbs every parameter so that biases and batch-norm shifts are not at
/// their all-zero initial values.
inline void jitter(cagem::Model& m, cagem::Rng& rng, double scale = 0.3) {
  for (auto& p : m.params().parameters())
    for (long i = 0; i < p.value.size(); ++i) p.value.data()[i] += scale * rng.normal();
}

/// Worst relative error between the autodiff gradient of `f` with respect to
/// every parameter of `store` and central finite differences.
inline double gradient_check(cagem::ParamStore& store, const std::function<cagem::ad::Var(cagem::ad::Tape&)>& f,
                             double h = 1e-5,
                             const std::function<bool(const cagem::Parameter&)>& include = nullptr) {
  store.zero_grad();
  {
    cagem::ad::Tape tape;
    tape.backward(f(tape));
  }
  double worst = 0.0;
  for (auto& p : store.parameters()) {
    if (include && !include(p)) continue;
    for (long i = 0; i < p.value.size(); ++i) {
      double& w = p.value.data()[i];
      const double keep = w;
      w = keep + h;
      double up, down;
      {
        cagem::ad::Tape t(false);
        up = f(t).scalar();
      }
      w = keep - h;
      {
        cagem::ad::Tape t(false);
        down = f(t).scalar();
      }
      w = keep;
      const double fd = (up - down) / (2 * h);
      const double ad = p.grad.data()[i];
      const double err = std::abs(fd - ad) / std::max(1.0, std::abs(fd) + std::abs(ad));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

/// Fresh directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("cagem_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
