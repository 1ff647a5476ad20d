// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

#include "cagem/model.hpp"

#include <algorithm>
#include <cmath>

#include "cagem/errors.hpp"

namespace cagem {

namespace {

void require_finite(ad::Var v, const char* term) {
  if (!v.value().allFinite())
    throw NumericalError(term, std::string("non-finite value in ") + term);
}

Matrix repeat_rows(const Matrix& m, Eigen::Index k) {
  Matrix out(m.rows() * k, m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.middleRows(r * k, k) = m.row(r).replicate(k, 1);
  return out;
}

ad::Var all_classes(ad::Tape& tape, Eigen::Index batch, int k) {
  return tape.constant(all_classes_one_hot(batch, k));
}

}  // namespace

const char* to_string(Variant v) { return v == Variant::VAE ? "vae" : "cagem"; }

Variant parse_variant(const std::string& name) {
  if (name == "vae") return Variant::VAE;
  if (name == "cagem") return Variant::CaGeM;
  throw ConfigError("unknown model variant '" + name + "' (expected vae or cagem)");
}

void ModelConfig::validate() const {
  if (x_dim < 1 || z1_dim < 1 || z2_dim < 1)
    throw ConfigError("model config: x_dim, z1_dim and z2_dim must be >= 1");
  if (variant == Variant::CaGeM && clusters < 1)
    throw ConfigError("model config: cluster count must be >= 1");
  for (int h : hidden)
    if (h < 1) throw ConfigError("model config: hidden widths must be >= 1");
}

ElboNoise draw_elbo_noise(const ModelConfig& config, Eigen::Index batch, Rng& rng) {
  ElboNoise noise;
  noise.z1 = rng.normal_matrix(batch, config.z1_dim);
  noise.z2 = rng.normal_matrix(batch * config.effective_clusters(), config.z2_dim);
  return noise;
}

Model::Model(ModelConfig config, std::uint64_t init_seed) : config_(std::move(config)) {
  config_.validate();
  Rng init(init_seed);
  const auto& h = config_.hidden;
  const bool bn = config_.batch_norm;
  const int x = config_.x_dim, z1 = config_.z1_dim, z2 = config_.z2_dim;
  if (config_.variant == Variant::VAE) {
    q_z1_ = GaussianHead(store_, "q_z1", {x}, h, z1, ParamGroup::Phi, bn, init);
    q_z2_ = GaussianHead(store_, "q_z2", {z1}, h, z2, ParamGroup::Phi, bn, init);
    p_z1_ = GaussianHead(store_, "p_z1", {z2}, h, z1, ParamGroup::Theta, bn, init);
    p_x_ = BernoulliHead(store_, "p_x", {z1}, h, x, ParamGroup::Theta, bn, init);
    return;
  }
  const int k = config_.clusters;
  q_z1_ = GaussianHead(store_, "q_z1", {x}, h, z1, ParamGroup::Phi, bn, init);
  q_y_ = CategoricalHead(store_, "q_y", {z1, x}, h, k, ParamGroup::PhiY, bn, init);
  std::vector<int> q_z2_inputs = config_.skip_connection ? std::vector<int>{x, k, z1}
                                                         : std::vector<int>{k, z1};
  q_z2_ = GaussianHead(store_, "q_z2", q_z2_inputs, h, z2, ParamGroup::Phi, bn, init);
  p_y_ = CategoricalHead(store_, "p_y", {z2}, h, k, ParamGroup::ThetaY, bn, init);
  p_z1_ = GaussianHead(store_, "p_z1", {k, z2}, h, z1, ParamGroup::Theta, bn, init);
  p_x_ = BernoulliHead(store_, "p_x", {k, z1}, h, x, ParamGroup::Theta, bn, init);
}

void Model::check_input(const Matrix& x, const ElboNoise* noise) const {
  if (x.cols() != config_.x_dim)
    throw DimensionError("model: input width " + std::to_string(x.cols()) + " but x_dim is " +
                         std::to_string(config_.x_dim));
  if (x.rows() < 1) throw DimensionError("model: empty batch");
  if (!noise) return;
  const Eigen::Index k = config_.effective_clusters();
  if (noise->z1.rows() != x.rows() || noise->z1.cols() != config_.z1_dim)
    throw DimensionError("model: z1 noise must be " + std::to_string(x.rows()) + "x" +
                         std::to_string(config_.z1_dim));
  if (noise->z2.rows() != x.rows() * k || noise->z2.cols() != config_.z2_dim)
    throw DimensionError("model: z2 noise must be " + std::to_string(x.rows() * k) + "x" +
                         std::to_string(config_.z2_dim) + " (one draw per class)");
}

JointTerms Model::joint_terms(ad::Tape& tape, const Matrix& x, const ElboNoise& noise,
                              BatchNormMode mode) {
  using namespace ad;
  check_input(x, &noise);
  const Eigen::Index batch = x.rows();
  const int k = config_.effective_clusters();
  JointTerms t;
  t.batch = batch;
  t.k = k;

  const Var xv = tape.constant(x);
  const GaussianVar q1 = q_z1_.forward(tape, store_, {xv}, mode);
  const Var z1 = gaussian_rsample(q1, tape.constant(noise.z1));
  const Var log_q_z1 = gaussian_log_prob(z1, q1);
  const Var eps2 = tape.constant(noise.z2);

  GaussianVar q2;
  Var z2;
  if (config_.variant == Variant::VAE) {
    q2 = q_z2_.forward(tape, store_, {z1}, mode);
    z2 = gaussian_rsample(q2, eps2);
    t.log_px = bernoulli_log_prob_logits(xv, p_x_.logits(tape, store_, {z1}, mode));
    t.p_z1_dist = p_z1_.forward(tape, store_, {z2}, mode);
    t.log_p_z1 = gaussian_log_prob(z1, t.p_z1_dist);
    t.log_p_y = tape.constant(Matrix::Zero(batch, 1));
    t.log_q_y = tape.constant(Matrix::Zero(batch, 1));
    t.weights = tape.constant(Matrix::Ones(batch, 1));
    t.class_weights = t.weights;
    t.log_q_z1 = log_q_z1;
  } else {
    const Var log_qy = q_y_.log_probs(tape, store_, {z1, xv}, mode);
    const Var y = all_classes(tape, batch, k);
    if (config_.skip_connection)
      q2 = q_z2_.forward(tape, store_, {xv, y, z1}, mode);
    else
      q2 = q_z2_.forward(tape, store_, {y, z1}, mode);
    z2 = gaussian_rsample(q2, eps2);
    const Var x_rep = tape.constant(repeat_rows(x, k));
    t.log_px = bernoulli_log_prob_logits(x_rep, p_x_.logits(tape, store_, {y, z1}, mode));
    t.p_z1_dist = p_z1_.forward(tape, store_, {y, z2}, mode);
    t.log_p_z1 = gaussian_log_prob(repeat_rows(z1, k), t.p_z1_dist);
    t.log_p_y = sum_cols(p_y_.log_probs(tape, store_, {z2}, mode) * y);
    t.log_q_y = reshape(log_qy, batch * k, 1);
    t.weights = exp(t.log_q_y);
    t.class_weights = exp(log_qy);
    t.log_q_z1 = repeat_rows(log_q_z1, k);
  }
  t.q_z1_dist = q1;
  t.q_z2_dist = q2;
  t.log_p_z2 = standard_normal_log_prob(z2);
  t.log_q_z2 = gaussian_log_prob(z2, q2);
  t.kl_z2 = gaussian_kl_standard(q2);

  require_finite(t.log_px, "log p(x|y,z1)");
  require_finite(t.log_p_z1, "log p(z1|y,z2)");
  require_finite(t.log_p_y, "log p(y|z2)");
  require_finite(t.log_p_z2, "log p(z2)");
  require_finite(t.log_q_z1, "log q(z1|x)");
  require_finite(t.log_q_y, "log q(y|z1,x)");
  require_finite(t.log_q_z2, "log q(z2|x,y,z1)");
  return t;
}

ElboVars Model::elbo(ad::Tape& tape, const Matrix& x, const ElboNoise& noise, double tau,
                     BatchNormMode mode) {
  using namespace ad;
  if (!(tau >= 0.0 && tau <= 1.0))
    throw DomainError("elbo: temperature " + std::to_string(tau) + " outside [0, 1]");
  const JointTerms j = joint_terms(tape, x, noise, mode);
  const Var latent = j.log_p_z1 + j.log_p_y + j.log_p_z2 - j.log_q_y - j.log_q_z1 - j.log_q_z2;
  ElboVars out;
  out.log_px = sum_row_groups(j.weights * j.log_px, j.k);
  out.latent_term = sum_row_groups(j.weights * latent, j.k);
  out.elbo = out.log_px + tau * out.latent_term;
  out.class_weights = j.class_weights;
  return out;
}

Vector Model::log_importance_weight(const Matrix& x, const ElboNoise& noise) {
  ad::Tape tape(false);
  const JointTerms j = joint_terms(tape, x, noise, BatchNormMode::EvalFrozen);
  const Matrix per_class = j.log_px.value() + j.log_p_z1.value() + j.log_p_y.value() +
                           j.log_p_z2.value() - j.log_q_z1.value() - j.log_q_z2.value();
  Vector out(j.batch);
  for (Eigen::Index b = 0; b < j.batch; ++b) {
    const auto group = per_class.col(0).segment(b * j.k, j.k);
    const double m = group.maxCoeff();
    out[b] = m + std::log((group.array() - m).exp().sum());
  }
  return out;
}

ClassifierVars Model::classifier_probs(ad::Tape& tape, const Matrix& x, const ElboNoise& noise,
                                       BatchNormMode mode, bool isolate_heads) {
  using namespace ad;
  if (config_.variant != Variant::CaGeM)
    throw ConfigError("classifiers need the cluster-aware variant");
  check_input(x, &noise);
  const Eigen::Index batch = x.rows();
  const int k = config_.clusters;
  const Var xv = tape.constant(x);
  const GaussianVar q1 = q_z1_.forward(tape, store_, {xv}, mode);
  Var z1 = gaussian_rsample(q1, tape.constant(noise.z1));
  if (isolate_heads) z1 = stop_gradient(z1);
  const Var log_w = q_y_.log_probs(tape, store_, {z1, xv}, mode);
  const Var w = exp(log_w);
  const Var y = all_classes(tape, batch, k);
  const GaussianVar q2 = config_.skip_connection
                             ? q_z2_.forward(tape, store_, {xv, y, z1}, mode)
                             : q_z2_.forward(tape, store_, {y, z1}, mode);
  Var z2 = gaussian_rsample(q2, tape.constant(noise.z2));
  if (isolate_heads) z2 = stop_gradient(z2);
  const Var pi = exp(p_y_.log_probs(tape, store_, {z2}, mode));
  ClassifierVars out;
  out.q_probs = w;
  out.p_probs = sum_row_groups(mul_col(pi, reshape(w, batch * k, 1)), k);
  return out;
}

Matrix Model::q_y_probs(const Matrix& x, const Matrix& z1_noise) {
  using namespace ad;
  if (config_.variant != Variant::CaGeM)
    throw ConfigError("classifiers need the cluster-aware variant");
  check_input(x, nullptr);
  if (z1_noise.rows() != x.rows() || z1_noise.cols() != config_.z1_dim)
    throw DimensionError("q_y_probs: z1 noise must be " + std::to_string(x.rows()) + "x" +
                         std::to_string(config_.z1_dim));
  Tape tape(false);
  const auto mode = BatchNormMode::EvalFrozen;
  const Var xv = tape.constant(x);
  const GaussianVar q1 = q_z1_.forward(tape, store_, {xv}, mode);
  const Var z1 = gaussian_rsample(q1, tape.constant(z1_noise));
  return q_y_.log_probs(tape, store_, {z1, xv}, mode).value().array().exp();
}

Generated Model::generate(int n, std::optional<int> y_fixed, Rng& rng, bool binarize) {
  using namespace ad;
  const bool clustered = config_.variant == Variant::CaGeM;
  if (y_fixed && !clustered) throw ConfigError("generate: the VAE has no class variable");
  if (y_fixed && (*y_fixed < 0 || *y_fixed >= config_.clusters))
    throw DomainError("generate: class " + std::to_string(*y_fixed) + " outside [0, " +
                      std::to_string(config_.clusters) + ")");
  if (n < 0) throw DomainError("generate: negative sample count");
  Generated g;
  if (n == 0) {
    g.means = Matrix(0, config_.x_dim);
    g.z1 = Matrix(0, config_.z1_dim);
    g.z2 = Matrix(0, config_.z2_dim);
    return g;
  }
  Tape tape(false);
  const auto mode = BatchNormMode::EvalFrozen;
  g.z2 = rng.normal_matrix(n, config_.z2_dim);
  const Var z2 = tape.constant(g.z2);
  GaussianVar p1;
  Var y;
  if (clustered) {
    const int k = config_.clusters;
    g.y.resize(n);
    if (y_fixed) {
      std::fill(g.y.begin(), g.y.end(), *y_fixed);
    } else {
      const Matrix pi = p_y_.log_probs(tape, store_, {z2}, mode).value().array().exp();
      for (int i = 0; i < n; ++i) {
        double u = rng.uniform(), acc = 0.0;
        int c = 0;
        for (; c < k - 1; ++c) {
          acc += pi(i, c);
          if (u < acc) break;
        }
        g.y[i] = c;
      }
    }
    y = tape.constant(one_hot(g.y, k));
    p1 = p_z1_.forward(tape, store_, {y, z2}, mode);
  } else {
    p1 = p_z1_.forward(tape, store_, {z2}, mode);
  }
  const Var z1 = gaussian_rsample(p1, tape.constant(rng.normal_matrix(n, config_.z1_dim)));
  g.z1 = z1.value();
  const Var logits = clustered ? p_x_.logits(tape, store_, {y, z1}, mode)
                               : p_x_.logits(tape, store_, {z1}, mode);
  g.means = sigmoid(clamp(logits, -kBernoulliLogitMax, kBernoulliLogitMax)).value();
  if (binarize) {
    g.binary.resize(n, config_.x_dim);
    for (Eigen::Index i = 0; i < g.means.size(); ++i)
      g.binary.data()[i] = rng.uniform() < g.means.data()[i] ? 1.0 : 0.0;
  }
  return g;
}

PosteriorMeans Model::posterior_means(const Matrix& x) {
  using namespace ad;
  check_input(x, nullptr);
  Tape tape(false);
  const auto mode = BatchNormMode::EvalFrozen;
  const Var xv = tape.constant(x);
  const Var mu1 = q_z1_.forward(tape, store_, {xv}, mode).mean;
  PosteriorMeans out;
  out.z1 = mu1.value();
  if (config_.variant == Variant::VAE) {
    out.z2 = q_z2_.forward(tape, store_, {mu1}, mode).mean.value();
    return out;
  }
  const Eigen::Index batch = x.rows();
  const int k = config_.clusters;
  const Var w = exp(q_y_.log_probs(tape, store_, {mu1, xv}, mode));
  const Var y = all_classes(tape, batch, k);
  const Var mu2 = config_.skip_connection ? q_z2_.forward(tape, store_, {xv, y, mu1}, mode).mean
                                          : q_z2_.forward(tape, store_, {y, mu1}, mode).mean;
  out.z2 = sum_row_groups(mul_col(mu2, reshape(w, batch * k, 1)), k).value();
  return out;
}

namespace {

ElboTerms to_terms(const ElboVars& v) {
  ElboTerms t;
  t.log_px = v.log_px.value().col(0);
  t.latent_term = v.latent_term.value().col(0);
  t.class_weights = v.class_weights.value();
  t.elbo = v.elbo.value().col(0);
  return t;
}

}  // namespace

ElboTerms vae_elbo(Model& model, const Matrix& x, const ElboNoise& noise, double tau,
                   BatchNormMode mode) {
  if (model.config().variant != Variant::VAE)
    throw ConfigError("vae_elbo called on a cluster-aware model");
  ad::Tape tape(false);
  return to_terms(model.elbo(tape, x, noise, tau, mode));
}

ElboTerms cagem_elbo(Model& model, const Matrix& x, const ElboNoise& noise, double tau,
                     BatchNormMode mode) {
  if (model.config().variant != Variant::CaGeM)
    throw ConfigError("cagem_elbo called on a VAE");
  ad::Tape tape(false);
  return to_terms(model.elbo(tape, x, noise, tau, mode));
}

}  // namespace cagem
