// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

// Importance-weighted likelihood bounds, layer activity diagnostics and
// latent-space export. Everything here runs with frozen batch-norm
// statistics and leaves the model untouched.

#pragma once

#include <iosfwd>
#include <limits>
#include <optional>

#include "cagem/model.hpp"
#include "cagem/rng.hpp"

namespace cagem {

inline constexpr int kDefaultIwChunk = 100;

/// Streaming log((1/n) sum_i exp(v_i)) that rescales whenever a larger value
/// arrives, so it never overflows.
class LogMeanExp {
 public:
  void add(double v);
  double value() const;
  long count() const { return n_; }

 private:
  double max_ = -std::numeric_limits<double>::infinity();
  double sum_ = 0.0;
  long n_ = 0;
};

struct IWEstimate {
  double bound = 0.0;           // mean over examples, nats
  double standard_error = 0.0;  // of that mean, across examples
  Vector per_example;
  int samples = 0;              // L
  int chunk = 0;
};

/// F_L: per example, log of the mean of L importance weights. The samples
/// are processed `chunk` at a time with a running log-sum-exp.
IWEstimate iw_bound(Model& model, const Matrix& x, int samples, Rng& rng,
                    int chunk = kDefaultIwChunk);

/// Per-example means, in nats.
struct ActivityReport {
  /// Class-weighted analytic KL[q(z2|x,y,z1) || p(z2)].
  double kl_z2 = 0.0;
  /// Class-weighted analytic KL[q(z1|x) || p(z1|y,z2)].
  double kl_z1 = 0.0;
};

/// One-sample split of the tau = 1 ELBO:
///   elbo = reconstruction + z1_term - z2_log_ratio
/// reconstruction = E_q(y)[log p(x|y,z1)],
/// z1_term        = E_q(y)[log p(z1|y,z2) + log p(y|z2) - log q(y|z1,x) - log q(z1|x)],
/// z2_log_ratio   = E_q(y)[log q(z2|x,y,z1) - log p(z2)].
struct ElboDecomposition {
  ActivityReport activity;
  double reconstruction = 0.0;
  double z1_term = 0.0;
  double z2_log_ratio = 0.0;
  double elbo = 0.0;
  long examples = 0;
};

/// Evaluated in chunks of `chunk` examples.
ElboDecomposition elbo_decompose(Model& model, const Matrix& x, Rng& rng, int chunk = 256);

struct LatentTable {
  Matrix z1;      // posterior means
  Matrix z2;
  Matrix z1_pca;  // N x 2
  Matrix z2_pca;  // N x 2
  std::optional<IndexVector> labels;
};

/// Projection of the centred rows onto the top `components` right singular
/// vectors. Throws DomainError for fewer than 2 rows or zero variance.
/// Missing components (data with fewer columns) are filled with zeros.
Matrix pca_project(const Matrix& data, int components = 2);

LatentTable latent_export(Model& model, const Matrix& x, const std::optional<IndexVector>& labels);

/// Tab-separated, one header line: id [label] z1_0.. z2_0.. z1_pc1 z1_pc2 z2_pc1 z2_pc2.
void write_latent_table(std::ostream& out, const LatentTable& table);

}  // namespace cagem
