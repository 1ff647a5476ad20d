// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

#include "cagem/objective.hpp"

#include <cmath>

#include "cagem/errors.hpp"

namespace cagem {

namespace {

// Floor on a class probability before the log; keeps the loss finite when
// a classifier is confidently wrong.
constexpr double kProbFloor = 1e-12;

ad::Var mean_cross_entropy(ad::Tape& tape, ad::Var probs, const Matrix& targets) {
  const ad::Var p_true = ad::sum_cols(probs * tape.constant(targets));
  return -ad::mean(ad::log(ad::clamp(p_true, kProbFloor, 1.0)));
}

}  // namespace

double compute_alpha(double beta, long n_unlabelled, long n_labelled) {
  if (!(beta >= 0.0)) throw ConfigError("alpha: beta must be >= 0");
  if (n_unlabelled < 0) throw ConfigError("alpha: negative dataset size");
  if (n_labelled < 1) throw ConfigError("alpha: needs at least one labelled example");
  return beta * static_cast<double>(n_unlabelled + n_labelled) / static_cast<double>(n_labelled);
}

CrossEntropyVars labelled_cross_entropies(ad::Tape& tape, Model& model, const LabelledBatch& batch,
                                          const ElboNoise& noise) {
  if (batch.x.rows() != static_cast<Eigen::Index>(batch.y.size()))
    throw DimensionError("labelled batch: " + std::to_string(batch.x.rows()) + " images but " +
                         std::to_string(batch.y.size()) + " labels");
  const Matrix targets = one_hot(batch.y, model.config().clusters);
  const ClassifierVars c =
      model.classifier_probs(tape, batch.x, noise, BatchNormMode::EvalFrozen, true);
  return {mean_cross_entropy(tape, c.p_probs, targets), mean_cross_entropy(tape, c.q_probs, targets)};
}

LossBreakdown training_step(Model& model, Adam& optimizer, const Matrix& x_unlabelled,
                            const std::optional<LabelledBatch>& labelled, double tau, double alpha,
                            double lr, Rng& rng) {
  if (labelled && model.config().variant != Variant::CaGeM)
    throw ConfigError("labelled data needs the cluster-aware variant");
  ParamStore& store = model.params();
  std::vector<Matrix> saved_buffers;
  for (const auto& b : store.buffers()) saved_buffers.push_back(b.value);

  ad::Tape tape;
  LossBreakdown out;
  out.alpha = labelled ? alpha : 0.0;
  try {
    const ElboNoise noise = draw_elbo_noise(model.config(), x_unlabelled.rows(), rng);
    const ElboVars e = model.elbo(tape, x_unlabelled, noise, tau, BatchNormMode::TrainCollect);
    ad::Var loss = -ad::mean(e.elbo);
    out.elbo_mean = e.elbo.value().mean();
    if (labelled) {
      const ElboNoise lnoise = draw_elbo_noise(model.config(), labelled->x.rows(), rng);
      const CrossEntropyVars ce = labelled_cross_entropies(tape, model, *labelled, lnoise);
      out.ce_p = ce.ce_p.scalar();
      out.ce_q = ce.ce_q.scalar();
      loss = loss + alpha * (ce.ce_p + ce.ce_q);
    }
    out.total = -loss.scalar();
    if (!std::isfinite(out.total)) throw NumericalError("loss", "non-finite training loss");
    store.zero_grad();
    tape.backward(loss);
    for (const auto& p : store.parameters())
      if (!p.grad.allFinite()) throw NumericalError("gradient", "non-finite gradient in " + p.name);
  } catch (const NumericalError&) {
    for (std::size_t i = 0; i < saved_buffers.size(); ++i) store.buffers()[i].value = saved_buffers[i];
    store.zero_grad();
    throw;
  }
  optimizer.step(store, lr);
  return out;
}

}  // namespace cagem
