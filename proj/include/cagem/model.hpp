// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

// Generative and inference networks of the two-layer VAE and of the
// cluster-aware model, and their single-sample ELBO estimators.
//
// Cluster-aware generative side:  p(z2) p(y|z2) p(z1|y,z2) p(x|y,z1)
// Cluster-aware inference side:   q(z1|x) q(y|z1,x) q(z2|x,y,z1)
// VAE generative side:            p(z2) p(z1|z2) p(x|z1)
// VAE inference side:             q(z1|x) q(z2|z1)
//
// The sum over y is exact: every quantity downstream of y is evaluated for
// all K classes at once, with one z2 draw per class. Per-class tensors are
// stored example-major, row b*K + c.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cagem/autodiff.hpp"
#include "cagem/distributions.hpp"
#include "cagem/nets.hpp"
#include "cagem/params.hpp"
#include "cagem/rng.hpp"

namespace cagem {

enum class Variant { VAE, CaGeM };

const char* to_string(Variant v);
Variant parse_variant(const std::string& name);

struct ModelConfig {
  Variant variant = Variant::CaGeM;
  int x_dim = 784;
  int z1_dim = 64;
  int z2_dim = 32;
  /// Number of clusters K. Ignored by the VAE.
  int clusters = 10;
  /// Hidden widths of every 2-layer trunk.
  std::vector<int> hidden{1024, 512};
  bool batch_norm = true;
  /// Feed x directly into q(z2|x,y,z1).
  bool skip_connection = true;

  void validate() const;
  /// Class count seen by the estimators; 1 for the VAE.
  int effective_clusters() const { return variant == Variant::CaGeM ? clusters : 1; }
  bool operator==(const ModelConfig&) const = default;
};

/// Standard-normal noise driving one ELBO sample. `z2` has batch*K rows for
/// the cluster-aware model (one draw per class) and batch rows for the VAE.
struct ElboNoise {
  Matrix z1;
  Matrix z2;
};

ElboNoise draw_elbo_noise(const ModelConfig& config, Eigen::Index batch, Rng& rng);

/// Per-class log-density columns of one forward pass (batch*K x 1 each; the
/// VAE uses K = 1, log_q_y = 0 and weights = 1).
struct JointTerms {
  Eigen::Index batch = 0;
  int k = 1;
  ad::Var log_px;     // log p(x|y,z1)
  ad::Var log_p_z1;   // log p(z1|y,z2)
  ad::Var log_p_y;    // log p(y|z2)
  ad::Var log_p_z2;   // log p(z2)
  ad::Var log_q_z1;   // log q(z1|x), repeated per class
  ad::Var log_q_y;    // log q(y|z1,x)
  ad::Var log_q_z2;   // log q(z2|x,y,z1)
  ad::Var kl_z2;      // analytic KL[q(z2|x,y,z1) || p(z2)]
  ad::Var weights;    // q(y|z1,x)
  ad::Var class_weights;  // batch x K view of weights
  GaussianVar q_z1_dist;  // batch rows
  GaussianVar p_z1_dist;  // batch*K rows
  GaussianVar q_z2_dist;  // batch*K rows
};

/// Differentiable ELBO pieces, each (batch x 1) except class_weights.
struct ElboVars {
  ad::Var elbo;
  ad::Var log_px;
  ad::Var latent_term;
  ad::Var class_weights;
};

/// Per-example values; elbo = log_px + tau * latent_term.
struct ElboTerms {
  Vector log_px;
  Vector latent_term;
  Matrix class_weights;
  Vector elbo;
};

/// Class probabilities of the two classifiers for one noise draw.
struct ClassifierVars {
  ad::Var q_probs;  // q(y|z1,x) at the drawn z1
  ad::Var p_probs;  // sum_c q(c|z1,x) p(y|z2^c)
};

struct Generated {
  Matrix means;
  Matrix binary;  // empty unless requested
  IndexVector y;  // empty for the VAE
  Matrix z1;
  Matrix z2;
};

struct PosteriorMeans {
  Matrix z1;
  Matrix z2;
};

class Model {
 public:
  Model(ModelConfig config, std::uint64_t init_seed);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  JointTerms joint_terms(ad::Tape& tape, const Matrix& x, const ElboNoise& noise,
                         BatchNormMode mode);

  ElboVars elbo(ad::Tape& tape, const Matrix& x, const ElboNoise& noise, double tau,
                BatchNormMode mode);

  /// log of the importance weight sum_c p(x,c,z1,z2^c) / (q(z1|x) q(z2^c|x,c,z1))
  /// for one noise draw; (batch x 1). The VAE uses p(x,z1,z2) / q(z1,z2|x).
  Vector log_importance_weight(const Matrix& x, const ElboNoise& noise);

  /// When `isolate_heads` is set, z1 and z2 enter the two classifier heads
  /// as constants, so only theta_y and phi_y can receive gradient.
  ClassifierVars classifier_probs(ad::Tape& tape, const Matrix& x, const ElboNoise& noise,
                                  BatchNormMode mode, bool isolate_heads);

  /// q(y|z1,x) for z1 = mean + std * z1_noise, without the z2 branch.
  Matrix q_y_probs(const Matrix& x, const Matrix& z1_noise);

  Generated generate(int n, std::optional<int> y_fixed, Rng& rng, bool binarize);

  PosteriorMeans posterior_means(const Matrix& x);

  const GaussianHead& q_z1() const { return q_z1_; }
  const GaussianHead& q_z2() const { return q_z2_; }
  const GaussianHead& p_z1() const { return p_z1_; }
  const BernoulliHead& p_x() const { return p_x_; }
  const CategoricalHead& q_y() const { return q_y_; }
  const CategoricalHead& p_y() const { return p_y_; }

 private:
  void check_input(const Matrix& x, const ElboNoise* noise) const;

  ModelConfig config_;
  ParamStore store_;
  GaussianHead q_z1_;
  GaussianHead q_z2_;
  GaussianHead p_z1_;
  BernoulliHead p_x_;
  CategoricalHead q_y_;  // cluster-aware only
  CategoricalHead p_y_;  // cluster-aware only
};

/// Single-sample ELBO of the baseline VAE; throws ConfigError for the other variant.
ElboTerms vae_elbo(Model& model, const Matrix& x, const ElboNoise& noise, double tau,
                   BatchNormMode mode);
/// Single-sample ELBO of the cluster-aware model with the analytic sum over y.
ElboTerms cagem_elbo(Model& model, const Matrix& x, const ElboNoise& noise, double tau,
                     BatchNormMode mode);

}  // namespace cagem
