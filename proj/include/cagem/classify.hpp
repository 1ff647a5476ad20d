// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

// Monte Carlo class predictions of the two classifiers of the
// cluster-aware model:
//   q-classifier  E_{q(z1|x)}[ q(y|z1,x) ]
//   p-classifier  E_{q(z1|x) q(y|z1,x) q(z2|x,y,z1)}[ p(y|z2) ]
// Evaluation always uses frozen batch-norm statistics.

#pragma once

#include "cagem/model.hpp"
#include "cagem/rng.hpp"

namespace cagem {

/// Rows are class distributions, averaged over `samples` noise draws.
Matrix q_classifier(Model& model, const Matrix& x, int samples, Rng& rng);
Matrix p_classifier(Model& model, const Matrix& x, int samples, Rng& rng);

struct ClassifierEstimates {
  Matrix q;
  Matrix p;
};

/// Both classifiers from the same noise draws.
ClassifierEstimates classify(Model& model, const Matrix& x, int samples, Rng& rng);

/// Row-wise argmax; ties go to the lowest class index.
IndexVector predict(const Matrix& probs);

/// Fraction of rows whose argmax differs from the label.
double error_rate(const Matrix& probs, const IndexVector& labels);

}  // namespace cagem
