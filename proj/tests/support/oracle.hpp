// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

// Reference computations for tests. Everything here works one example at a
// time with explicit loops over std::vector<double>, reading parameters by
// name, so it shares no code path with the batched autodiff implementation.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cagem/model.hpp"

namespace oracle {

using Vec = std::vector<double>;

inline constexpr double kLog2Pi = 1.8378770664093454836;

inline const cagem::Matrix& param(const cagem::Model& m, const std::string& name) {
  const int i = m.params().find_parameter(name);
  if (i < 0) throw std::runtime_error("oracle: no parameter " + name);
  return m.params().parameter(i).value;
}

inline const cagem::Matrix& buffer(const cagem::Model& m, const std::string& name) {
  const int i = m.params().find_buffer(name);
  if (i < 0) throw std::runtime_error("oracle: no buffer " + name);
  return m.params().buffer(i).value;
}

inline bool has_param(const cagem::Model& m, const std::string& name) {
  return m.params().find_parameter(name) >= 0;
}

inline Vec concat(const std::vector<Vec>& parts) {
  Vec out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

inline Vec affine(const cagem::Model& m, const std::string& name, const Vec& in) {
  const cagem::Matrix& w = param(m, name + ".weight");
  const cagem::Matrix& b = param(m, name + ".bias");
  if (static_cast<long>(in.size()) != w.rows()) throw std::runtime_error("oracle: width mismatch at " + name);
  Vec out(static_cast<std::size_t>(w.cols()));
  for (long j = 0; j < w.cols(); ++j) {
    double acc = b(0, j);
    for (long i = 0; i < w.rows(); ++i) acc += in[static_cast<std::size_t>(i)] * w(i, j);
    out[static_cast<std::size_t>(j)] = acc;
  }
  return out;
}

/// Trunk with frozen batch-norm statistics (or none), then ReLU.
inline Vec trunk(const cagem::Model& m, const std::string& head, Vec h) {
  for (int l = 0; has_param(m, head + ".trunk." + std::to_string(l) + ".weight"); ++l) {
    const std::string name = head + ".trunk." + std::to_string(l);
    h = affine(m, name, h);
    if (has_param(m, name + ".bn.scale")) {
      const auto& g = param(m, name + ".bn.scale");
      const auto& b = param(m, name + ".bn.shift");
      const auto& mu = buffer(m, name + ".bn.running_mean");
      const auto& var = buffer(m, name + ".bn.running_var");
      for (std::size_t j = 0; j < h.size(); ++j) {
        const long jj = static_cast<long>(j);
        h[j] = g(0, jj) * (h[j] - mu(0, jj)) / std::sqrt(var(0, jj) + 1e-5) + b(0, jj);
      }
    }
    for (double& v : h) v = v > 0 ? v : 0.0;
  }
  return h;
}

struct Gauss {
  Vec mean, log_std;
};

inline Gauss gaussian_head(const cagem::Model& m, const std::string& head, const Vec& in) {
  const Vec h = trunk(m, head, in);
  Gauss g{affine(m, head + ".mean", h), affine(m, head + ".log_std", h)};
  for (double& v : g.log_std) v = std::min(8.0, std::max(-8.0, v));
  return g;
}

inline Vec softmax_head(const cagem::Model& m, const std::string& head, const Vec& in) {
  Vec l = affine(m, head + ".logits", trunk(m, head, in));
  double mx = l[0];
  for (double v : l) mx = std::max(mx, v);
  double s = 0;
  for (double& v : l) s += (v = std::exp(v - mx));
  for (double& v : l) v /= s;
  return l;
}

inline Vec bernoulli_means(const cagem::Model& m, const Vec& in) {
  Vec l = affine(m, "p_x.logits", trunk(m, "p_x", in));
  for (double& v : l) v = 1.0 / (1.0 + std::exp(-std::min(13.815509557963773, std::max(-13.815509557963773, v))));
  return l;
}

inline double log_normal(const Vec& x, const Gauss& g) {
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = (x[i] - g.mean[i]) / std::exp(g.log_std[i]);
    s += -0.5 * kLog2Pi - g.log_std[i] - 0.5 * z * z;
  }
  return s;
}

inline double log_std_normal(const Vec& x) {
  double s = 0;
  for (double v : x) s += -0.5 * kLog2Pi - 0.5 * v * v;
  return s;
}

inline double log_bernoulli(const Vec& x, const Vec& mean) {
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] > 0.5 ? std::log(mean[i]) : std::log1p(-mean[i]);
  return s;
}

inline Vec sample(const Gauss& g, const Vec& eps) {
  Vec z(eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) z[i] = g.mean[i] + std::exp(g.log_std[i]) * eps[i];
  return z;
}

inline Vec row(const cagem::Matrix& m, long r) {
  Vec v(static_cast<std::size_t>(m.cols()));
  for (long c = 0; c < m.cols(); ++c) v[static_cast<std::size_t>(c)] = m(r, c);
  return v;
}

inline Vec one_hot(int c, int k) {
  Vec v(static_cast<std::size_t>(k), 0.0);
  v[static_cast<std::size_t>(c)] = 1.0;
  return v;
}

/// Everything the enumeration needs for one example.
struct ClassTerms {
  Vec weights;                     // q(c|z1,x)
  std::vector<double> log_joint;   // log p(x,c,z1,z2^c)
  std::vector<double> log_px;      // log p(x|c,z1)
  std::vector<double> latent;      // latent log-ratio part of the ELBO for class c
  std::vector<double> log_q_z1_z2; // log q(z1|x) + log q(z2^c|x,c,z1)
  std::vector<Vec> pi;             // p(y|z2^c)
  std::vector<double> kl_z2;       // analytic KL[q(z2^c)||N(0,I)]
};

/// K-term enumeration of the cluster-aware model for example b of `x`,
/// using rows b of noise.z1 and rows b*K .. b*K+K-1 of noise.z2.
inline ClassTerms enumerate(const cagem::Model& m, const cagem::Matrix& x, const cagem::ElboNoise& noise,
                            long b) {
  const auto& cfg = m.config();
  const int k = cfg.clusters;
  const Vec xv = row(x, b);
  const Gauss q1 = gaussian_head(m, "q_z1", xv);
  const Vec z1 = sample(q1, row(noise.z1, b));
  const double lq1 = log_normal(z1, q1);
  ClassTerms t;
  t.weights = softmax_head(m, "q_y", concat({z1, xv}));
  for (int c = 0; c < k; ++c) {
    const Vec y = one_hot(c, k);
    const Gauss q2 = gaussian_head(m, "q_z2", cfg.skip_connection ? concat({xv, y, z1}) : concat({y, z1}));
    const Vec z2 = sample(q2, row(noise.z2, b * k + c));
    const double lq2 = log_normal(z2, q2);
    const double lpz2 = log_std_normal(z2);
    const Vec pi = softmax_head(m, "p_y", z2);
    const double lpy = std::log(pi[static_cast<std::size_t>(c)]);
    const double lpz1 = log_normal(z1, gaussian_head(m, "p_z1", concat({y, z2})));
    const double lpx = log_bernoulli(xv, bernoulli_means(m, concat({y, z1})));
    const double lw = std::log(t.weights[static_cast<std::size_t>(c)]);
    t.log_joint.push_back(lpx + lpz1 + lpy + lpz2);
    t.log_px.push_back(lpx);
    t.latent.push_back(lpz1 + lpy + lpz2 - lw - lq1 - lq2);
    t.log_q_z1_z2.push_back(lq1 + lq2);
    t.pi.push_back(pi);
    double kl = 0;
    for (std::size_t i = 0; i < z2.size(); ++i) {
      const double v = std::exp(2 * q2.log_std[i]);
      kl += 0.5 * (v + q2.mean[i] * q2.mean[i] - 1.0) - q2.log_std[i];
    }
    t.kl_z2.push_back(kl);
  }
  return t;
}

inline double cagem_elbo(const cagem::Model& m, const cagem::Matrix& x, const cagem::ElboNoise& noise,
                         long b, double tau) {
  const ClassTerms t = enumerate(m, x, noise, b);
  double s = 0;
  for (std::size_t c = 0; c < t.weights.size(); ++c) s += t.weights[c] * (t.log_px[c] + tau * t.latent[c]);
  return s;
}

/// Cascade classifier for one noise draw.
inline Vec p_classifier(const cagem::Model& m, const cagem::Matrix& x, const cagem::ElboNoise& noise, long b) {
  const ClassTerms t = enumerate(m, x, noise, b);
  Vec out(t.weights.size(), 0.0);
  for (std::size_t c = 0; c < t.weights.size(); ++c)
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += t.weights[c] * t.pi[c][j];
  return out;
}

inline Vec q_classifier(const cagem::Model& m, const cagem::Matrix& x, const cagem::Matrix& eps1, long b) {
  const Vec xv = row(x, b);
  const Vec z1 = sample(gaussian_head(m, "q_z1", xv), row(eps1, b));
  return softmax_head(m, "q_y", concat({z1, xv}));
}

/// Baseline VAE single-sample ELBO for example b.
inline double vae_elbo(const cagem::Model& m, const cagem::Matrix& x, const cagem::ElboNoise& noise, long b,
                       double tau) {
  const Vec xv = row(x, b);
  const Gauss q1 = gaussian_head(m, "q_z1", xv);
  const Vec z1 = sample(q1, row(noise.z1, b));
  const Gauss q2 = gaussian_head(m, "q_z2", z1);
  const Vec z2 = sample(q2, row(noise.z2, b));
  const double lpx = log_bernoulli(xv, bernoulli_means(m, z1));
  const double latent = log_normal(z1, gaussian_head(m, "p_z1", z2)) + log_std_normal(z2) -
                        log_normal(z1, q1) - log_normal(z2, q2);
  return lpx + tau * latent;
}

}  // namespace oracle
