// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

// Diagonal Gaussian, factorised Bernoulli and categorical distributions.
//
// Every log-density is summed over dimensions, giving nats per example.
// log_std is clamped to [kLogStdMin, kLogStdMax] and Bernoulli means to
// [kBernoulliEps, 1 - kBernoulliEps] wherever they enter a computation.

#pragma once

#include "cagem/autodiff.hpp"
#include "cagem/tensor.hpp"

namespace cagem {

inline constexpr double kLogStdMin = -8.0;
inline constexpr double kLogStdMax = 8.0;
inline constexpr double kBernoulliEps = 1e-6;
/// log((1 - kBernoulliEps) / kBernoulliEps); Bernoulli logits are clamped to
/// +-this, which is the same as clamping the mean.
inline constexpr double kBernoulliLogitMax = 13.815509557963773;

struct GaussianParams {
  Vector mean;
  Vector log_std;
};

struct BernoulliParams {
  Vector mean;
};

struct CategoricalParams {
  Vector probs;
};

double gaussian_log_prob(const Vector& x, const GaussianParams& p);
/// mean + exp(log_std) * noise.
Vector gaussian_rsample(const GaussianParams& p, const Vector& noise);
/// Analytic KL[q || p] >= 0.
double gaussian_kl(const GaussianParams& q, const GaussianParams& p);
/// x must be {0,1}-valued.
double bernoulli_log_prob(const Vector& x, const BernoulliParams& p);
double categorical_log_prob(int c, const CategoricalParams& p);

// ---- batched, differentiable forms (one example per row) -----------------

struct GaussianVar {
  ad::Var mean;
  ad::Var log_std;

  GaussianParams row(Eigen::Index r) const;
};

/// Per-row log N(x; mean, exp(log_std)^2) -> (n x 1).
ad::Var gaussian_log_prob(ad::Var x, const GaussianVar& p);
/// Per-row log N(x; 0, I) -> (n x 1).
ad::Var standard_normal_log_prob(ad::Var x);
ad::Var gaussian_rsample(const GaussianVar& p, ad::Var noise);
/// Per-row KL[q || N(0, I)] -> (n x 1).
ad::Var gaussian_kl_standard(const GaussianVar& q);
/// Per-row Bernoulli log-likelihood from logits -> (n x 1). Logits are
/// clamped to +-kBernoulliLogitMax.
ad::Var bernoulli_log_prob_logits(ad::Var x, ad::Var logits);

}  // namespace cagem
