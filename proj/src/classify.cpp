// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

#include "cagem/classify.hpp"

#include <algorithm>

#include "cagem/errors.hpp"

namespace cagem {

namespace {

// Examples per forward pass; the p-classifier runs K rows per example.
constexpr Eigen::Index kChunk = 256;

void check(const Model& model, const Matrix& x, int samples) {
  if (model.config().variant != Variant::CaGeM)
    throw ConfigError("classifiers need the cluster-aware variant");
  if (samples < 1) throw DomainError("classifier: sample count must be >= 1");
  if (x.rows() < 1) throw DimensionError("classifier: empty input");
}

}  // namespace

Matrix q_classifier(Model& model, const Matrix& x, int samples, Rng& rng) {
  check(model, x, samples);
  const int k = model.config().clusters;
  Matrix out = Matrix::Zero(x.rows(), k);
  for (Eigen::Index start = 0; start < x.rows(); start += kChunk) {
    const Eigen::Index n = std::min(kChunk, x.rows() - start);
    const Matrix xb = x.middleRows(start, n);
    for (int s = 0; s < samples; ++s)
      out.middleRows(start, n) += model.q_y_probs(xb, rng.normal_matrix(n, model.config().z1_dim));
  }
  return out / static_cast<double>(samples);
}

ClassifierEstimates classify(Model& model, const Matrix& x, int samples, Rng& rng) {
  check(model, x, samples);
  const int k = model.config().clusters;
  ClassifierEstimates out{Matrix::Zero(x.rows(), k), Matrix::Zero(x.rows(), k)};
  for (Eigen::Index start = 0; start < x.rows(); start += kChunk) {
    const Eigen::Index n = std::min(kChunk, x.rows() - start);
    const Matrix xb = x.middleRows(start, n);
    for (int s = 0; s < samples; ++s) {
      ad::Tape tape(false);
      const ElboNoise noise = draw_elbo_noise(model.config(), n, rng);
      const ClassifierVars c = model.classifier_probs(tape, xb, noise, BatchNormMode::EvalFrozen, true);
      out.q.middleRows(start, n) += c.q_probs.value();
      out.p.middleRows(start, n) += c.p_probs.value();
    }
  }
  out.q /= static_cast<double>(samples);
  out.p /= static_cast<double>(samples);
  return out;
}

Matrix p_classifier(Model& model, const Matrix& x, int samples, Rng& rng) {
  return classify(model, x, samples, rng).p;
}

IndexVector predict(const Matrix& probs) {
  IndexVector out(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < probs.cols(); ++c)
      if (probs(r, c) > probs(r, best)) best = c;
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

double error_rate(const Matrix& probs, const IndexVector& labels) {
  if (probs.rows() == 0) throw DimensionError("error rate: empty input");
  if (probs.rows() != static_cast<Eigen::Index>(labels.size()))
    throw DimensionError("error rate: " + std::to_string(probs.rows()) + " predictions but " +
                         std::to_string(labels.size()) + " labels");
  const IndexVector pred = predict(probs);
  long wrong = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= probs.cols())
      throw DomainError("error rate: label " + std::to_string(labels[i]) + " outside [0, " +
                        std::to_string(probs.cols()) + ")");
    wrong += pred[i] != labels[i];
  }
  return static_cast<double>(wrong) / static_cast<double>(labels.size());
}

}  // namespace cagem
