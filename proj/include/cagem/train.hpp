// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

// Training loop, schedules and the run directory.
//
// Run directory layout:
//   config.json     options, seeds and schedule values of the run
//   metrics.jsonl   one JSON record per logged value
//   last.ckpt       latest training state (model, optimizer, RNG, cursor)
//   best.ckpt       state with the best validation bound so far
//   samples/        PGM grids of generated digits
//   halt.ckpt, halt.json   written when a step produces a non-finite value

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "cagem/data.hpp"
#include "cagem/model.hpp"

namespace cagem {

struct Schedule {
  double lr0 = 1e-3;
  double lr_decay = 0.75;
  int lr_decay_every = 50;
  /// tau ramps linearly from 0 at epoch 0 to 1 at this epoch.
  int warmup_epochs = 100;
  int epochs = 100;
  int batch_size = 256;
  /// Labelled examples per step, capped at the labelled set size.
  int labelled_batch_size = 64;

  double learning_rate(int epoch) const;
  double temperature(int epoch) const;
  void validate() const;
};

struct TrainOptions {
  ModelConfig model;
  Schedule schedule;
  std::string dataset = "mnist";
  int n_labels = 0;
  double beta = 0.1;
  std::uint64_t seed = 1;
  /// Validation evaluation period in epochs; 0 disables it.
  int eval_every = 1;
  int valid_iw = 1;
  /// Examples of the validation split used per evaluation; negative means all.
  long valid_examples = -1;
  /// Stop when the validation bound has not improved for this many
  /// evaluations' worth of epochs; 0 disables early stopping.
  int patience = 0;
  /// last.ckpt is also written at the end of the run and before a halt.
  int checkpoint_every = 10;
  /// Sample-grid period in epochs; 0 disables grids.
  int sample_every = 0;
  /// Importance samples for the final test evaluation; 0 skips it.
  int test_iw = 5000;
  long test_examples = -1;
  std::filesystem::path run_dir;
  std::string run_id = "run";
  bool verbose = false;
};

struct TrainResult {
  int epochs_completed = 0;
  int best_epoch = -1;
  double best_valid = 0.0;
  std::optional<double> test_bound;
  std::optional<double> test_standard_error;
  bool stopped_early = false;
};

/// Seeds of the independent random streams of a run.
enum class Stream : std::uint64_t {
  Init = 0,
  Labels = 1,
  Train = 2,
  EvalBinarize = 3,
  Test = 4,
  Samples = 5,
  Validation = 1000,  // + epoch
};

TrainResult run_training(const TrainOptions& options, const DatasetTriplet& data);

/// Continues from a last.ckpt written by run_training. `options` must match
/// the original run except for the epoch count and evaluation settings.
TrainResult resume_training(const std::filesystem::path& checkpoint, const TrainOptions& options,
                            const DatasetTriplet& data);

/// Evaluation inputs: grayscale images binarized once with a fixed stream,
/// so every evaluation of a run sees the same binary data.
Matrix evaluation_binarize(const Matrix& images, std::uint64_t seed, Split split);

}  // namespace cagem
