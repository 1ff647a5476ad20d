// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

#include "cagem/train.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>

#include "json.hpp"

#include "cagem/checkpoint.hpp"
#include "cagem/errors.hpp"
#include "cagem/evaluation.hpp"
#include "cagem/image.hpp"
#include "cagem/metrics.hpp"
#include "cagem/objective.hpp"
#include "cagem/optimizer.hpp"

namespace cagem {

namespace fs = std::filesystem;
using nlohmann::json;

double Schedule::learning_rate(int epoch) const {
  return lr0 * std::pow(lr_decay, std::floor(static_cast<double>(epoch) / lr_decay_every));
}

double Schedule::temperature(int epoch) const {
  if (warmup_epochs <= 0) return 1.0;
  return std::min(1.0, static_cast<double>(epoch) / warmup_epochs);
}

void Schedule::validate() const {
  if (!(lr0 > 0.0)) throw ConfigError("schedule: learning rate must be > 0");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("schedule: lr decay must be in (0, 1]");
  if (lr_decay_every < 1) throw ConfigError("schedule: lr decay period must be >= 1");
  if (warmup_epochs < 0) throw ConfigError("schedule: warmup must be >= 0");
  if (epochs < 0) throw ConfigError("schedule: epoch count must be >= 0");
  if (batch_size < 2) throw ConfigError("schedule: batch size must be >= 2");
  if (labelled_batch_size < 1) throw ConfigError("schedule: labelled batch size must be >= 1");
}

Matrix evaluation_binarize(const Matrix& images, std::uint64_t seed, Split split) {
  Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(Stream::EvalBinarize) * 16 +
                                  static_cast<std::uint64_t>(split));
  return binarize(images, rng);
}

namespace {

std::uint64_t stream(Stream s, int offset = 0) {
  return static_cast<std::uint64_t>(s) + static_cast<std::uint64_t>(offset);
}

json schedule_json(const Schedule& s) {
  return {{"lr0", s.lr0},
          {"lr_decay", s.lr_decay},
          {"lr_decay_every", s.lr_decay_every},
          {"warmup_epochs", s.warmup_epochs},
          {"epochs", s.epochs},
          {"batch_size", s.batch_size},
          {"labelled_batch_size", s.labelled_batch_size}};
}

json options_json(const TrainOptions& o) {
  return {{"model", config_to_json(o.model)},
          {"schedule", schedule_json(o.schedule)},
          {"dataset", o.dataset},
          {"n_labels", o.n_labels},
          {"beta", o.beta},
          {"seed", o.seed},
          {"eval_every", o.eval_every},
          {"valid_iw", o.valid_iw},
          {"valid_examples", o.valid_examples},
          {"patience", o.patience},
          {"checkpoint_every", o.checkpoint_every},
          {"sample_every", o.sample_every},
          {"test_iw", o.test_iw},
          {"test_examples", o.test_examples},
          {"run_id", o.run_id},
          {"adam", {{"beta1", 0.9}, {"beta2", 0.999}, {"eps", 1e-8}}},
          {"batch_norm", {{"momentum", kBatchNormMomentum}, {"eps", kBatchNormEps}}},
          {"elbo_z2_draws", "one independent draw per class"},
          {"eval_binarization", "fixed per split, derived from seed"}};
}

// Cheap content fingerprint so a resume cannot silently switch datasets.
json data_fingerprint(const Dataset& d) {
  return {{"rows", d.images.rows()}, {"cols", d.images.cols()}, {"sum", d.images.sum()}};
}

Matrix head_rows(const Matrix& m, long limit) {
  if (limit < 0 || limit >= m.rows()) return m;
  return m.topRows(limit);
}

struct State {
  int epoch = 0;  // next epoch to run
  int best_epoch = -1;
  double best_valid = -std::numeric_limits<double>::infinity();
  int since_best = 0;
  Rng rng;
  std::optional<LabelledCycler> cycler;
  IndexVector labelled;
};

class Runner {
 public:
  Runner(const TrainOptions& o, const DatasetTriplet& data, bool fresh)
      : o_(o), data_(data), model_(o.model, Rng::derive(o.seed, stream(Stream::Init)).next_u64()) {
    o_.schedule.validate();
    if (o_.model.x_dim != data.train.images.cols())
      throw ConfigError("model x_dim " + std::to_string(o_.model.x_dim) + " but images have " +
                        std::to_string(data.train.images.cols()) + " pixels");
    if (o_.n_labels > 0 && o_.model.variant != Variant::CaGeM)
      throw ConfigError("labelled training needs the cluster-aware variant");
    if (o_.n_labels > 0 && o_.model.clusters != data.train.classes)
      throw ConfigError("labelled training needs one cluster per class (" +
                        std::to_string(data.train.classes) + ")");
    if (o_.run_dir.empty()) throw ConfigError("training needs a run directory");
    fs::create_directories(o_.run_dir);
    adam_ = Adam(model_.params());
    state_.rng = Rng::derive(o_.seed, stream(Stream::Train));
    if (o_.n_labels > 0) {
      state_.labelled = draw_labelled_subset(data.train, o_.n_labels,
                                             Rng::derive(o_.seed, stream(Stream::Labels)).next_u64())
                            .indices;
      state_.cycler.emplace(state_.labelled, std::min(o_.schedule.labelled_batch_size, o_.n_labels));
      alpha_ = compute_alpha(o_.beta, static_cast<long>(data.train.size()) - o_.n_labels, o_.n_labels);
    }
    if (o_.eval_every > 0 && data.valid.size() > 0)
      valid_x_ = head_rows(evaluation_binarize(data.valid.images, o_.seed, Split::Valid),
                           o_.valid_examples);
    log_ = MetricsLog(o_.run_dir / "metrics.jsonl", fresh);
    if (fresh) {
      std::ofstream(o_.run_dir / "config.json") << options_json(o_).dump(2) << '\n';
    }
  }

  void resume_from(const fs::path& path) {
    const Archive a = read_archive(path);
    if (!a.meta.contains("train")) throw FormatError(path.string() + ": not a training checkpoint");
    const json& t = a.meta["train"];
    if (config_from_json(a.meta["model"]) != o_.model)
      throw ConfigError("resume: model configuration differs from the checkpoint");
    const json& orig = t.at("options");
    for (const char* key : {"dataset", "n_labels", "beta", "seed"})
      if (orig.at(key) != options_json(o_).at(key))
        throw ConfigError(std::string("resume: option '") + key + "' differs from the checkpoint");
    if (t.at("data") != data_fingerprint(data_.train))
      throw ConfigError("resume: training data differs from the checkpointed run");
    restore_model(a, model_);
    restore_optimizer(a, adam_, model_.params());
    state_.epoch = t.at("epoch");
    state_.best_epoch = t.at("best_epoch");
    state_.best_valid = t.at("best_valid").is_null() ? -std::numeric_limits<double>::infinity()
                                                     : t.at("best_valid").get<double>();
    state_.since_best = t.at("since_best");
    state_.rng.deserialize(t.at("rng"));
    if (state_.cycler) {
      state_.cycler->restore(t.at("cycler_order").get<IndexVector>(), t.at("cycler_pos"));
    }
  }

  TrainResult run() {
    TrainResult result;
    const Schedule& s = o_.schedule;
    bool stop = false;
    while (!stop && state_.epoch < s.epochs) {
      const int epoch = state_.epoch;
      run_epoch(epoch);
      ++state_.epoch;
      const bool last = state_.epoch == s.epochs;
      if (o_.eval_every > 0 && valid_x_.rows() > 0 && (state_.epoch % o_.eval_every == 0 || last))
        stop = evaluate(epoch);
      if (o_.sample_every > 0 && (state_.epoch % o_.sample_every == 0 || last)) write_samples(epoch);
      if (stop || last || (o_.checkpoint_every > 0 && state_.epoch % o_.checkpoint_every == 0))
        save(o_.run_dir / "last.ckpt");
    }
    result.epochs_completed = state_.epoch;
    result.stopped_early = stop;
    result.best_epoch = state_.best_epoch;
    result.best_valid = state_.best_valid;
    if (o_.test_iw > 0 && data_.test.size() > 0) final_test(result);
    return result;
  }

 private:
  void log(int epoch, const std::string& metric, double value, int iw = 0) {
    log_.write({o_.run_id, epoch, metric, value, iw, o_.seed});
  }

  void run_epoch(int epoch) {
    const Schedule& s = o_.schedule;
    const double lr = s.learning_rate(epoch), tau = s.temperature(epoch);
    Rng& rng = state_.rng;
    IndexVector perm(static_cast<std::size_t>(data_.train.size()));
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size(); i > 1; --i)
      std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng.next_u64() % i)]);
    double elbo = 0, ce_p = 0, ce_q = 0, total = 0;
    long steps = 0;
    for (std::size_t start = 0; start < perm.size(); start += static_cast<std::size_t>(s.batch_size)) {
      const std::size_t end = std::min(perm.size(), start + static_cast<std::size_t>(s.batch_size));
      if (end - start < 2) break;  // batch statistics need two rows
      const IndexVector idx(perm.begin() + static_cast<long>(start), perm.begin() + static_cast<long>(end));
      const Matrix xu = binarize(gather_rows(data_.train.images, idx), rng);
      std::optional<LabelledBatch> lb;
      if (state_.cycler) {
        const IndexVector li = state_.cycler->next(rng);
        LabelledBatch b;
        b.x = binarize(gather_rows(data_.train.images, li), rng);
        for (int i : li) b.y.push_back((*data_.train.labels)[static_cast<std::size_t>(i)]);
        lb = std::move(b);
      }
      LossBreakdown l;
      try {
        l = training_step(model_, adam_, xu, lb, tau, alpha_, lr, rng);
      } catch (const NumericalError& e) {
        halt(epoch, steps, e);
        throw;
      }
      elbo += l.elbo_mean;
      ce_p += l.ce_p;
      ce_q += l.ce_q;
      total += l.total;
      ++steps;
    }
    const double n = std::max<long>(steps, 1);
    log(epoch, "lr", lr);
    log(epoch, "tau", tau);
    log(epoch, "train_elbo", elbo / n);
    if (state_.cycler) {
      log(epoch, "train_ce_p", ce_p / n);
      log(epoch, "train_ce_q", ce_q / n);
      log(epoch, "alpha", alpha_);
    }
    log(epoch, "train_objective", total / n);
    if (o_.verbose)
      std::cerr << "epoch " << epoch << " lr " << lr << " tau " << tau << " elbo " << elbo / n << '\n';
  }

  // Returns true when early stopping triggers.
  bool evaluate(int epoch) {
    Rng rng = Rng::derive(o_.seed, stream(Stream::Validation, epoch));
    const IWEstimate est = iw_bound(model_, valid_x_, o_.valid_iw, rng);
    const ElboDecomposition d = elbo_decompose(model_, valid_x_, rng);
    log(epoch, "valid_F", est.bound, o_.valid_iw);
    log(epoch, "valid_kl_z2", d.activity.kl_z2);
    log(epoch, "valid_kl_z1", d.activity.kl_z1);
    if (o_.verbose) std::cerr << "epoch " << epoch << " valid F_" << o_.valid_iw << " " << est.bound << '\n';
    if (est.bound > state_.best_valid) {
      state_.best_valid = est.bound;
      state_.best_epoch = epoch;
      state_.since_best = 0;
      save(o_.run_dir / "best.ckpt");
      return false;
    }
    state_.since_best += o_.eval_every;
    return o_.patience > 0 && state_.since_best >= o_.patience;
  }

  void write_samples(int epoch) {
    Rng rng = Rng::derive(o_.seed, stream(Stream::Samples));
    fs::create_directories(o_.run_dir / "samples");
    Matrix grid;
    int columns = 10;
    if (o_.model.variant == Variant::CaGeM) {
      const int k = std::min(o_.model.clusters, 20);
      grid.resize(static_cast<Eigen::Index>(k) * columns, o_.model.x_dim);
      for (int c = 0; c < k; ++c)
        grid.middleRows(static_cast<Eigen::Index>(c) * columns, columns) =
            model_.generate(columns, c, rng, false).means;
    } else {
      grid = model_.generate(100, std::nullopt, rng, false).means;
    }
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%04d.pgm", epoch);
    if (o_.model.x_dim == 784) write_pgm_grid(o_.run_dir / "samples" / name, grid, columns);
  }

  Archive archive() const {
    Archive a;
    add_model(a, model_);
    add_optimizer(a, adam_, model_.params());
    json t{{"epoch", state_.epoch},
           {"best_epoch", state_.best_epoch},
           {"since_best", state_.since_best},
           {"rng", state_.rng.serialize()},
           {"options", options_json(o_)},
           {"data", data_fingerprint(data_.train)},
           {"labelled", state_.labelled}};
    t["best_valid"] = std::isfinite(state_.best_valid) ? json(state_.best_valid) : json(nullptr);
    if (state_.cycler) {
      t["cycler_order"] = state_.cycler->order();
      t["cycler_pos"] = state_.cycler->position();
    }
    a.meta["train"] = t;
    return a;
  }

  void save(const fs::path& path) const { write_archive(path, archive()); }

  void halt(int epoch, long step, const NumericalError& e) {
    save(o_.run_dir / "halt.ckpt");
    json dump{{"epoch", epoch}, {"step", step}, {"term", e.term()}, {"message", e.what()},
              {"lr", o_.schedule.learning_rate(epoch)}, {"tau", o_.schedule.temperature(epoch)}};
    std::ofstream(o_.run_dir / "halt.json") << dump.dump(2) << '\n';
  }

  void final_test(TrainResult& result) {
    if (fs::exists(o_.run_dir / "best.ckpt") && state_.best_epoch >= 0)
      restore_model(read_archive(o_.run_dir / "best.ckpt"), model_);
    const Matrix x = head_rows(evaluation_binarize(data_.test.images, o_.seed, Split::Test), o_.test_examples);
    Rng rng = Rng::derive(o_.seed, stream(Stream::Test));
    const IWEstimate est = iw_bound(model_, x, o_.test_iw, rng);
    log(state_.epoch, "test_F", est.bound, o_.test_iw);
    log(state_.epoch, "test_F_se", est.standard_error, o_.test_iw);
    result.test_bound = est.bound;
    result.test_standard_error = est.standard_error;
  }

  TrainOptions o_;
  const DatasetTriplet& data_;
  Model model_;
  Adam adam_;
  State state_;
  double alpha_ = 0.0;
  Matrix valid_x_;
  MetricsLog log_;
};

}  // namespace

TrainResult run_training(const TrainOptions& options, const DatasetTriplet& data) {
  Runner r(options, data, true);
  return r.run();
}

TrainResult resume_training(const fs::path& checkpoint, const TrainOptions& options,
                            const DatasetTriplet& data) {
  Runner r(options, data, false);
  r.resume_from(checkpoint);
  return r.run();
}

}  // namespace cagem
