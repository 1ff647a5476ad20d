// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "cagem/distributions.hpp"
#include "cagem/errors.hpp"
#include "cagem/rng.hpp"
#include "helpers.hpp"

using namespace cagem;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

GaussianParams gauss(std::initializer_list<double> m, std::initializer_list<double> s) {
  return {vec(m), vec(s)};
}

// Monte Carlo estimate of E_q[log q - log p] and its standard error.
std::pair<double, double> mc_kl(const GaussianParams& q, const GaussianParams& p, long n, Rng& rng) {
  double sum = 0, sum2 = 0;
  for (long i = 0; i < n; ++i) {
    Vector eps(q.mean.size());
    for (Eigen::Index d = 0; d < eps.size(); ++d) eps[d] = rng.normal();
    const Vector z = gaussian_rsample(q, eps);
    const double v = gaussian_log_prob(z, q) - gaussian_log_prob(z, p);
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / static_cast<double>(n);
  const double var = sum2 / static_cast<double>(n) - mean * mean;
  return {mean, std::sqrt(var / static_cast<double>(n))};
}

}  // namespace

TEST_CASE("gaussian log density values") {
  CHECK(gaussian_log_prob(vec({0}), gauss({0}, {0})) == doctest::Approx(-0.9189385332046727));
  // -log(2 pi) - log 0.5 at the mode of a 2-d Gaussian.
  CHECK(gaussian_log_prob(vec({1, 2}), gauss({1, 2}, {0, std::log(0.5)})) ==
        doctest::Approx(-std::log(2 * M_PI) + std::log(2.0)).epsilon(1e-12));
  CHECK(gaussian_log_prob(vec({1, 2}), gauss({1, 2}, {0, std::log(0.5)})) ==
        doctest::Approx(-1.1447298858494).epsilon(1e-10));
  CHECK(gaussian_log_prob(vec({3}), gauss({0}, {0})) == doctest::Approx(-0.9189385332046727 - 4.5));
}

TEST_CASE("gaussian log density rejects mismatched lengths") {
  CHECK_THROWS_AS(gaussian_log_prob(vec({0, 1}), gauss({0}, {0})), DimensionError);
  CHECK_THROWS_AS(gaussian_rsample(gauss({0}, {0}), vec({1, 2})), DimensionError);
  CHECK_THROWS_AS(gaussian_kl(gauss({0}, {0}), gauss({0, 0}, {0, 0})), DimensionError);
}

TEST_CASE("reparameterized sampling") {
  CHECK(gaussian_rsample(gauss({5}, {0}), vec({0}))[0] == 5.0);
  CHECK(gaussian_rsample(gauss({0}, {std::log(2.0)}), vec({1}))[0] == doctest::Approx(2.0));
  Rng rng(11);
  double sum = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) sum += gaussian_rsample(gauss({1}, {0}), vec({rng.normal()}))[0];
  CHECK(std::abs(sum / n - 1.0) < 0.02);
}

TEST_CASE("log_std is clamped") {
  const double lo = gaussian_log_prob(vec({0}), gauss({0}, {-50}));
  CHECK(std::isfinite(lo));
  CHECK(lo == doctest::Approx(gaussian_log_prob(vec({0}), gauss({0}, {kLogStdMin}))));
  CHECK(gaussian_rsample(gauss({0}, {100}), vec({1}))[0] == doctest::Approx(std::exp(kLogStdMax)));
}

TEST_CASE("gaussian KL closed forms") {
  const GaussianParams p = gauss({0.2, -1}, {0.1, -0.3});
  CHECK(gaussian_kl(p, p) == 0.0);
  CHECK(gaussian_kl(gauss({1}, {0}), gauss({0}, {0})) == doctest::Approx(0.5));
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    const GaussianParams q = gauss({rng.normal(), rng.normal()}, {rng.normal(), rng.normal()});
    const GaussianParams r = gauss({rng.normal(), rng.normal()}, {rng.normal(), rng.normal()});
    CHECK(gaussian_kl(q, r) >= 0.0);
  }
}

TEST_CASE("gaussian KL agrees with Monte Carlo") {
  Rng rng(5);
  const auto [mc, se] = mc_kl(gauss({0.3}, {std::log(0.7)}), gauss({0}, {0}), 1000000, rng);
  CHECK(std::abs(mc - gaussian_kl(gauss({0.3}, {std::log(0.7)}), gauss({0}, {0}))) < 3 * se);
  for (int t = 0; t < 5; ++t) {
    const GaussianParams q = gauss({rng.normal(), rng.normal()}, {0.5 * rng.normal(), 0.5 * rng.normal()});
    const GaussianParams p = gauss({rng.normal(), rng.normal()}, {0.5 * rng.normal(), 0.5 * rng.normal()});
    const auto [m, s] = mc_kl(q, p, 200000, rng);
    CHECK(std::abs(m - gaussian_kl(q, p)) < 3.5 * s);
  }
}

TEST_CASE("bernoulli log likelihood") {
  CHECK(bernoulli_log_prob(vec({1}), {vec({1 - 1e-6})}) == doctest::Approx(0.0).epsilon(1e-5));
  CHECK(bernoulli_log_prob(vec({1, 0}), {vec({0.5, 0.5})}) == doctest::Approx(2 * std::log(0.5)));
  CHECK(bernoulli_log_prob(vec({1, 1, 0}), {vec({0.9, 0.8, 0.3})}) ==
        doctest::Approx(std::log(0.9 * 0.8 * 0.7)));
  CHECK(bernoulli_log_prob(vec({1, 1, 0}), {vec({0.9, 0.8, 0.3})}) == doctest::Approx(-0.6851790109107685));
  CHECK(std::isfinite(bernoulli_log_prob(vec({1}), {vec({0.0})})));
  CHECK_THROWS_AS(bernoulli_log_prob(vec({0.5}), {vec({0.5})}), DomainError);
  CHECK_THROWS_AS(bernoulli_log_prob(vec({1, 0}), {vec({0.5})}), DimensionError);
}

TEST_CASE("categorical log probability") {
  CategoricalParams uniform{Vector::Constant(10, 0.1)};
  CHECK(categorical_log_prob(3, uniform) == doctest::Approx(std::log(0.1)));
  CHECK(categorical_log_prob(0, {vec({0.7, 0.3})}) == doctest::Approx(std::log(0.7)));
  CHECK(categorical_log_prob(0, {vec({1e-6, 1 - 1e-6})}) == doctest::Approx(std::log(1e-6)));
  CHECK(std::isfinite(categorical_log_prob(0, {vec({0.0, 1.0})})));
  CHECK_THROWS_AS(categorical_log_prob(2, {vec({0.5, 0.5})}), DomainError);
  CHECK_THROWS_AS(categorical_log_prob(-1, {vec({0.5, 0.5})}), DomainError);
  const Vector probs = vec({0.1, 0.2, 0.3, 0.4});
  double total = 0;
  for (int c = 0; c < 4; ++c) total += std::exp(categorical_log_prob(c, {probs}));
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("batched forms match the per-example functions") {
  Rng rng(8);
  ad::Tape tape;
  const Matrix xm = rng.normal_matrix(5, 3);
  const GaussianVar g{tape.constant(rng.normal_matrix(5, 3)), tape.constant(rng.normal_matrix(5, 3))};
  const Matrix lp = gaussian_log_prob(tape.constant(xm), g).value();
  const Matrix std_lp = standard_normal_log_prob(tape.constant(xm)).value();
  const Matrix kl = gaussian_kl_standard(g).value();
  const GaussianParams unit{Vector::Zero(3), Vector::Zero(3)};
  for (Eigen::Index r = 0; r < 5; ++r) {
    const Vector xr = xm.row(r).transpose();
    CHECK(lp(r, 0) == doctest::Approx(gaussian_log_prob(xr, g.row(r))).epsilon(1e-12));
    CHECK(std_lp(r, 0) == doctest::Approx(gaussian_log_prob(xr, unit)).epsilon(1e-12));
    CHECK(kl(r, 0) == doctest::Approx(gaussian_kl(g.row(r), unit)).epsilon(1e-12));
  }
  const Matrix eps = rng.normal_matrix(5, 3);
  const Matrix z = gaussian_rsample(g, tape.constant(eps)).value();
  for (Eigen::Index r = 0; r < 5; ++r) {
    const Vector zr = gaussian_rsample(g.row(r), eps.row(r).transpose());
    for (Eigen::Index d = 0; d < 3; ++d) CHECK(z(r, d) == doctest::Approx(zr[d]).epsilon(1e-12));
  }
}

TEST_CASE("fused bernoulli likelihood matches the composite formula") {
  Rng rng(9);
  ad::Tape tape;
  const Matrix x = testing::random_binary(6, 7, rng);
  Matrix logits = 4.0 * rng.normal_matrix(6, 7);
  logits(0, 0) = 40.0;  // clamped
  logits(1, 1) = -40.0;
  const Matrix got = bernoulli_log_prob_logits(tape.constant(x), tape.constant(logits)).value();
  for (Eigen::Index r = 0; r < 6; ++r) {
    double expect = 0;
    for (Eigen::Index d = 0; d < 7; ++d) {
      const double l = std::clamp(logits(r, d), -kBernoulliLogitMax, kBernoulliLogitMax);
      // log sigmoid(l) for x = 1 and log sigmoid(-l) for x = 0.
      expect += x(r, d) * l - std::log1p(std::exp(l));
    }
    CHECK(got(r, 0) == doctest::Approx(expect).epsilon(1e-12));
    Vector mean(7);
    for (Eigen::Index d = 0; d < 7; ++d) mean[d] = 1.0 / (1.0 + std::exp(-logits(r, d)));
    CHECK(got(r, 0) == doctest::Approx(bernoulli_log_prob(x.row(r).transpose(), {mean})).epsilon(1e-9));
  }
}

TEST_CASE("reparameterized sample gradients match finite differences") {
  Rng rng(10);
  ParamStore store;
  const int m = store.add_parameter("mean", ParamGroup::Phi, rng.normal_matrix(4, 3));
  const int s = store.add_parameter("log_std", ParamGroup::Phi, 0.5 * rng.normal_matrix(4, 3));
  const Matrix eps = rng.normal_matrix(4, 3);
  const Matrix w = rng.normal_matrix(4, 3);
  auto f = [&](ad::Tape& t) {
    const GaussianVar g{t.parameter(store.parameter(m)), t.parameter(store.parameter(s))};
    const ad::Var z = gaussian_rsample(g, t.constant(eps));
    return ad::sum(ad::square(z) * t.constant(w)) + ad::sum(gaussian_log_prob(z, g)) +
           ad::sum(gaussian_kl_standard(g));
  };
  CHECK(testing::gradient_check(store, f, 1e-4) < 1e-3);
}

TEST_CASE("bernoulli likelihood gradient matches finite differences") {
  Rng rng(12);
  ParamStore store;
  const int l = store.add_parameter("logits", ParamGroup::Theta, 3.0 * rng.normal_matrix(5, 4));
  const Matrix x = testing::random_binary(5, 4, rng);
  auto f = [&](ad::Tape& t) {
    return ad::sum(bernoulli_log_prob_logits(t.constant(x), t.parameter(store.parameter(l))));
  };
  CHECK(testing::gradient_check(store, f, 1e-5) < 1e-6);
}
