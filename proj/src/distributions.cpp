// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

#include "cagem/distributions.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <numbers>

#include "cagem/errors.hpp"

namespace cagem {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

void require_same_length(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b)
    throw DimensionError(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " +
                         std::to_string(b) + ")");
}

Vector clamped_log_std(const Vector& log_std) {
  return log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

}  // namespace

double gaussian_log_prob(const Vector& x, const GaussianParams& p) {
  require_same_length(p.mean.size(), p.log_std.size(), "gaussian_log_prob");
  require_same_length(x.size(), p.mean.size(), "gaussian_log_prob");
  const Vector ls = clamped_log_std(p.log_std);
  double total = 0.0;
  for (Eigen::Index d = 0; d < x.size(); ++d) {
    const double z = (x[d] - p.mean[d]) / std::exp(ls[d]);
    total += -kHalfLog2Pi - ls[d] - 0.5 * z * z;
  }
  return total;
}

Vector gaussian_rsample(const GaussianParams& p, const Vector& noise) {
  require_same_length(p.mean.size(), p.log_std.size(), "gaussian_rsample");
  require_same_length(noise.size(), p.mean.size(), "gaussian_rsample");
  return p.mean + (clamped_log_std(p.log_std).array().exp() * noise.array()).matrix();
}

double gaussian_kl(const GaussianParams& q, const GaussianParams& p) {
  require_same_length(q.mean.size(), q.log_std.size(), "gaussian_kl");
  require_same_length(p.mean.size(), p.log_std.size(), "gaussian_kl");
  require_same_length(q.mean.size(), p.mean.size(), "gaussian_kl");
  const Vector lq = clamped_log_std(q.log_std);
  const Vector lp = clamped_log_std(p.log_std);
  double total = 0.0;
  for (Eigen::Index d = 0; d < q.mean.size(); ++d) {
    const double vq = std::exp(2.0 * lq[d]);
    const double vp = std::exp(2.0 * lp[d]);
    const double dm = q.mean[d] - p.mean[d];
    total += lp[d] - lq[d] + (vq + dm * dm) / (2.0 * vp) - 0.5;
  }
  return std::max(total, 0.0);
}

double bernoulli_log_prob(const Vector& x, const BernoulliParams& p) {
  require_same_length(x.size(), p.mean.size(), "bernoulli_log_prob");
  double total = 0.0;
  for (Eigen::Index d = 0; d < x.size(); ++d) {
    if (x[d] != 0.0 && x[d] != 1.0)
      throw DomainError("bernoulli_log_prob: x[" + std::to_string(d) + "] = " +
                        std::to_string(x[d]) + " is not binary");
    const double m = std::clamp(p.mean[d], kBernoulliEps, 1.0 - kBernoulliEps);
    total += x[d] == 1.0 ? std::log(m) : std::log1p(-m);
  }
  return total;
}

double categorical_log_prob(int c, const CategoricalParams& p) {
  if (c < 0 || c >= p.probs.size())
    throw DomainError("categorical_log_prob: class " + std::to_string(c) + " outside [0, " +
                      std::to_string(p.probs.size()) + ")");
  return std::log(std::max(p.probs[c], DBL_MIN));
}

GaussianParams GaussianVar::row(Eigen::Index r) const {
  return {mean.value().row(r).transpose(), log_std.value().row(r).transpose()};
}

ad::Var gaussian_log_prob(ad::Var x, const GaussianVar& p) {
  using namespace ad;
  const Var ls = clamp(p.log_std, kLogStdMin, kLogStdMax);
  const Var z = (x - p.mean) * exp(-ls);
  return sum_cols(-ls - 0.5 * square(z)) - kHalfLog2Pi * static_cast<double>(x.cols());
}

ad::Var standard_normal_log_prob(ad::Var x) {
  using namespace ad;
  return sum_cols(-0.5 * square(x)) - kHalfLog2Pi * static_cast<double>(x.cols());
}

ad::Var gaussian_rsample(const GaussianVar& p, ad::Var noise) {
  using namespace ad;
  return p.mean + exp(clamp(p.log_std, kLogStdMin, kLogStdMax)) * noise;
}

ad::Var gaussian_kl_standard(const GaussianVar& q) {
  using namespace ad;
  const Var ls = clamp(q.log_std, kLogStdMin, kLogStdMax);
  // 0.5 * (var + mean^2 - 1) - log_std per dimension.
  const Var per_dim = 0.5 * (exp(2.0 * ls) + square(q.mean)) - ls;
  return sum_cols(per_dim) - 0.5 * static_cast<double>(q.mean.cols());
}

ad::Var bernoulli_log_prob_logits(ad::Var x, ad::Var logits) {
  return ad::bernoulli_logits_log_prob(x, logits, kBernoulliLogitMax);
}

}  // namespace cagem
