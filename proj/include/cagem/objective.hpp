// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

// Semi-supervised training objective and the parameter update.
//
//   loss = -( mean_u ELBO(x_u) - alpha * mean_l [H_p(x_l, y_l) + H_q(x_l, y_l)] )
//
// with alpha = beta * (N_u + N_l) / N_l. The cross-entropy terms see z1 and
// z2 as constants, so their gradient only reaches theta_y and phi_y.

#pragma once

#include <optional>

#include "cagem/model.hpp"
#include "cagem/optimizer.hpp"
#include "cagem/rng.hpp"

namespace cagem {

inline constexpr double kDefaultBeta = 0.1;

/// Batch means of one training step (nats per example);
/// total = elbo_mean - alpha * (ce_p + ce_q) is the objective being maximised.
struct LossBreakdown {
  double elbo_mean = 0.0;
  double ce_p = 0.0;  // -log p-classifier probability of the true class
  double ce_q = 0.0;  // -log q-classifier probability of the true class
  double alpha = 0.0;
  double total = 0.0;
};

/// beta * (n_unlabelled + n_labelled) / n_labelled. Throws ConfigError when
/// n_labelled < 1.
double compute_alpha(double beta, long n_unlabelled, long n_labelled);

struct LabelledBatch {
  Matrix x;
  IndexVector y;
};

struct CrossEntropyVars {
  ad::Var ce_p;  // 1x1 batch mean
  ad::Var ce_q;  // 1x1 batch mean
};

/// One-sample cross-entropies of both classifiers with running statistics
/// frozen and z1, z2 detached from the classifier heads.
CrossEntropyVars labelled_cross_entropies(ad::Tape& tape, Model& model, const LabelledBatch& batch,
                                          const ElboNoise& noise);

/// Forward, backward and one Adam update. Throws NumericalError before any
/// parameter or running statistic changes if the loss is not finite.
LossBreakdown training_step(Model& model, Adam& optimizer, const Matrix& x_unlabelled,
                            const std::optional<LabelledBatch>& labelled, double tau, double alpha,
                            double lr, Rng& rng);

}  // namespace cagem
