// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

#include "cagem/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <Eigen/SVD>

#include "cagem/errors.hpp"

namespace cagem {

namespace {

// Rows per forward pass during importance sampling (before the class
// expansion).
constexpr Eigen::Index kIwRowBudget = 1000;

Matrix repeat_rows(const Matrix& m, Eigen::Index k) {
  Matrix out(m.rows() * k, m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.middleRows(r * k, k) = m.row(r).replicate(k, 1);
  return out;
}

// Row-wise analytic KL between diagonal Gaussians given by mean/log_std.
Vector gaussian_kl_rows(const Matrix& qm, const Matrix& qs, const Matrix& pm, const Matrix& ps) {
  const Eigen::ArrayXXd var_ratio = (2.0 * (qs - ps).array()).exp();
  const Eigen::ArrayXXd diff = (qm - pm).array() / ps.array().exp();
  const Eigen::ArrayXXd per = 0.5 * (var_ratio + diff.square() - 1.0) - (qs - ps).array();
  return per.rowwise().sum().max(0.0);
}

}  // namespace

void LogMeanExp::add(double v) {
  if (v > max_) {
    sum_ *= std::exp(max_ - v);
    max_ = v;
  }
  sum_ += std::exp(v - max_);
  ++n_;
}

double LogMeanExp::value() const {
  if (n_ == 0) throw DomainError("log-mean-exp of an empty sequence");
  return max_ + std::log(sum_ / static_cast<double>(n_));
}

IWEstimate iw_bound(Model& model, const Matrix& x, int samples, Rng& rng, int chunk) {
  if (samples < 1) throw DomainError("iw bound: need at least one importance sample");
  if (chunk < 1) throw DomainError("iw bound: chunk size must be >= 1");
  if (x.rows() < 1) throw DimensionError("iw bound: empty input");
  const ModelConfig& cfg = model.config();
  const Eigen::Index n = x.rows();
  const Eigen::Index per_pass = std::max<Eigen::Index>(1, kIwRowBudget / chunk);

  IWEstimate est;
  est.samples = samples;
  est.chunk = chunk;
  est.per_example.resize(n);
  for (Eigen::Index start = 0; start < n; start += per_pass) {
    const Eigen::Index m = std::min(per_pass, n - start);
    std::vector<LogMeanExp> acc(static_cast<std::size_t>(m));
    for (int done = 0; done < samples; done += chunk) {
      const int c = std::min(chunk, samples - done);
      // Example-major replication: rows i*c .. i*c+c-1 belong to example i.
      const Matrix xr = repeat_rows(x.middleRows(start, m), c);
      const ElboNoise noise = draw_elbo_noise(cfg, xr.rows(), rng);
      const Vector lw = model.log_importance_weight(xr, noise);
      if (!lw.allFinite()) throw NumericalError("importance weight", "non-finite importance weight");
      for (Eigen::Index i = 0; i < m; ++i)
        for (int s = 0; s < c; ++s) acc[static_cast<std::size_t>(i)].add(lw[i * c + s]);
    }
    for (Eigen::Index i = 0; i < m; ++i) est.per_example[start + i] = acc[static_cast<std::size_t>(i)].value();
  }
  est.bound = est.per_example.mean();
  if (n > 1) {
    const double var = (est.per_example.array() - est.bound).square().sum() / (n - 1.0);
    est.standard_error = std::sqrt(var / static_cast<double>(n));
  }
  return est;
}

ElboDecomposition elbo_decompose(Model& model, const Matrix& x, Rng& rng, int chunk) {
  if (x.rows() < 1) throw DimensionError("elbo decomposition: empty input");
  if (chunk < 1) throw DomainError("elbo decomposition: chunk size must be >= 1");
  ElboDecomposition d;
  d.examples = x.rows();
  for (Eigen::Index start = 0; start < x.rows(); start += chunk) {
    const Eigen::Index m = std::min<Eigen::Index>(chunk, x.rows() - start);
    ad::Tape tape(false);
    const ElboNoise noise = draw_elbo_noise(model.config(), m, rng);
    const JointTerms j = model.joint_terms(tape, x.middleRows(start, m), noise, BatchNormMode::EvalFrozen);
    const Eigen::ArrayXd w = j.weights.value().col(0).array();
    const auto col = [](ad::Var v) { return v.value().col(0).array(); };
    d.reconstruction += (w * col(j.log_px)).sum();
    d.z1_term += (w * (col(j.log_p_z1) + col(j.log_p_y) - col(j.log_q_y) - col(j.log_q_z1))).sum();
    d.z2_log_ratio += (w * (col(j.log_q_z2) - col(j.log_p_z2))).sum();
    d.activity.kl_z2 += (w * col(j.kl_z2)).sum();
    const Vector kl1 = gaussian_kl_rows(repeat_rows(j.q_z1_dist.mean.value(), j.k),
                                        repeat_rows(j.q_z1_dist.log_std.value(), j.k),
                                        j.p_z1_dist.mean.value(), j.p_z1_dist.log_std.value());
    d.activity.kl_z1 += (w * kl1.array()).sum();
  }
  const double n = static_cast<double>(x.rows());
  d.reconstruction /= n;
  d.z1_term /= n;
  d.z2_log_ratio /= n;
  d.activity.kl_z2 /= n;
  d.activity.kl_z1 /= n;
  d.elbo = d.reconstruction + d.z1_term - d.z2_log_ratio;
  return d;
}

Matrix pca_project(const Matrix& data, int components) {
  if (components < 1) throw DomainError("pca: need at least one component");
  if (data.rows() < 2) throw DomainError("pca: degenerate data, need at least 2 rows");
  const RowVector mu = data.colwise().mean();
  const Eigen::MatrixXd centred = data.rowwise() - mu;
  if (centred.squaredNorm() <= 1e-24 * std::max(1.0, data.squaredNorm()))
    throw DomainError("pca: degenerate data, all rows are identical (zero variance)");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centred, Eigen::ComputeThinV);
  const Eigen::Index avail = std::min<Eigen::Index>(components, svd.matrixV().cols());
  Matrix out = Matrix::Zero(data.rows(), components);
  out.leftCols(avail) = centred * svd.matrixV().leftCols(avail);
  return out;
}

LatentTable latent_export(Model& model, const Matrix& x, const std::optional<IndexVector>& labels) {
  if (labels && static_cast<Eigen::Index>(labels->size()) != x.rows())
    throw DimensionError("latent export: " + std::to_string(x.rows()) + " images but " +
                         std::to_string(labels->size()) + " labels");
  LatentTable t;
  t.labels = labels;
  t.z1.resize(x.rows(), model.config().z1_dim);
  t.z2.resize(x.rows(), model.config().z2_dim);
  constexpr Eigen::Index kChunk = 256;
  for (Eigen::Index start = 0; start < x.rows(); start += kChunk) {
    const Eigen::Index m = std::min(kChunk, x.rows() - start);
    const PosteriorMeans pm = model.posterior_means(x.middleRows(start, m));
    t.z1.middleRows(start, m) = pm.z1;
    t.z2.middleRows(start, m) = pm.z2;
  }
  t.z1_pca = pca_project(t.z1);
  t.z2_pca = pca_project(t.z2);
  return t;
}

void write_latent_table(std::ostream& out, const LatentTable& t) {
  out << "id";
  if (t.labels) out << "\tlabel";
  for (Eigen::Index i = 0; i < t.z1.cols(); ++i) out << "\tz1_" << i;
  for (Eigen::Index i = 0; i < t.z2.cols(); ++i) out << "\tz2_" << i;
  out << "\tz1_pc1\tz1_pc2\tz2_pc1\tz2_pc2\n";
  const auto old = out.precision(9);
  for (Eigen::Index r = 0; r < t.z1.rows(); ++r) {
    out << r;
    if (t.labels) out << '\t' << (*t.labels)[static_cast<std::size_t>(r)];
    for (Eigen::Index i = 0; i < t.z1.cols(); ++i) out << '\t' << t.z1(r, i);
    for (Eigen::Index i = 0; i < t.z2.cols(); ++i) out << '\t' << t.z2(r, i);
    out << '\t' << t.z1_pca(r, 0) << '\t' << t.z1_pca(r, 1) << '\t' << t.z2_pca(r, 0) << '\t'
        << t.z2_pca(r, 1) << '\n';
  }
  out.precision(old);
}

}  // namespace cagem
