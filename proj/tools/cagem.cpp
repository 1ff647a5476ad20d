// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

// cagem: train, evaluate, classify, sample and diagnose.
//
// Exit codes: 0 success, 1 unexpected failure, 2 usage, 3 data or file
// format, 4 numerical failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "cagem/checkpoint.hpp"
#include "cagem/classify.hpp"
#include "cagem/data.hpp"
#include "cagem/errors.hpp"
#include "cagem/evaluation.hpp"
#include "cagem/image.hpp"
#include "cagem/metrics.hpp"
#include "cagem/runtime.hpp"
#include "cagem/train.hpp"

namespace fs = std::filesystem;
using namespace cagem;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

fs::path data_dir(const std::string& flag, const std::string& dataset) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("CAGEM_DATA_DIR")) return fs::path(env) / dataset;
  return fs::path("data") / dataset;
}

struct TrainFlags {
  std::string dataset = "mnist", data = "", variant = "cagem", out, resume;
  int labels = 0, clusters = 0, z1 = 64, z2 = 32;
  std::vector<int> hidden{1024, 512};
  bool no_skip = false, no_bn = false;
  long valid_size = -1;
  TrainOptions opt;
};

struct CheckpointFlags {
  std::string checkpoint, split = "test", data = "", dataset = "";
  long examples = -1;
  std::uint64_t seed = 1;
};

struct Loaded {
  Model model;
  nlohmann::json meta;
};

Loaded open_checkpoint(const std::string& path) {
  if (!fs::exists(path)) throw FormatError("checkpoint not found: " + path);
  Archive a = read_archive(path);
  return {load_model(a), a.meta};
}

// Dataset recorded in the checkpoint unless overridden.
Dataset split_of(const CheckpointFlags& f, const nlohmann::json& meta) {
  std::string name = f.dataset;
  if (name.empty()) {
    name = "mnist";
    if (meta.contains("train")) name = meta["train"]["options"].value("dataset", "mnist");
  }
  const DatasetTriplet t = load_dataset(name, data_dir(f.data, name));
  const Split s = parse_split(f.split);
  Dataset d = s == Split::Train ? t.train : s == Split::Valid ? t.valid : t.test;
  if (f.examples >= 0 && f.examples < d.size()) {
    d.images = d.images.topRows(f.examples);
    if (d.labels) d.labels->resize(static_cast<std::size_t>(f.examples));
  }
  return d;
}

std::uint64_t run_seed(const CheckpointFlags& f, const nlohmann::json& meta) {
  if (meta.contains("train")) return meta["train"]["options"].value("seed", f.seed);
  return f.seed;
}

void add_checkpoint_flags(CLI::App* cmd, CheckpointFlags& f) {
  cmd->add_option("--checkpoint", f.checkpoint, "Checkpoint file")->required();
  cmd->add_option("--split", f.split, "train, valid or test")
      ->check(CLI::IsMember({"train", "valid", "test"}));
  cmd->add_option("--data-dir", f.data, "Dataset directory (default $CAGEM_DATA_DIR/<dataset> or data/<dataset>)");
  cmd->add_option("--dataset", f.dataset, "mnist or omniglot (default: from the checkpoint)")
      ->check(CLI::IsMember({"mnist", "omniglot"}));
  cmd->add_option("--examples", f.examples, "Use only the first N examples of the split");
  cmd->add_option("--seed", f.seed, "Seed for evaluation noise");
}

int cmd_train(TrainFlags& f) {
  TrainOptions& o = f.opt;
  o.dataset = f.dataset;
  o.model.variant = parse_variant(f.variant);
  if (f.labels > 0 && o.model.variant != Variant::CaGeM)
    throw ConfigError("--labels > 0 requires --variant cagem");
  const int classes = dataset_classes(f.dataset);
  o.model.clusters = f.clusters > 0 ? f.clusters : classes;
  if (o.model.variant == Variant::CaGeM && o.model.clusters < 2)
    throw ConfigError("--clusters must be >= 2");
  if (f.labels > 0 && o.model.clusters != classes)
    throw ConfigError("labelled training needs --clusters equal to the class count (" +
                      std::to_string(classes) + ")");
  o.model.z1_dim = f.z1;
  o.model.z2_dim = f.z2;
  o.model.hidden = f.hidden;
  o.model.skip_connection = !f.no_skip;
  o.model.batch_norm = !f.no_bn;
  o.n_labels = f.labels;
  o.run_dir = f.out;
  if (o.run_id.empty() || o.run_id == "run") o.run_id = fs::path(f.out).filename().string();
  o.schedule.validate();
  const DatasetTriplet data = load_dataset(f.dataset, data_dir(f.data, f.dataset), {f.valid_size});
  o.model.x_dim = static_cast<int>(data.train.images.cols());
  const TrainResult r = f.resume.empty() ? run_training(o, data) : resume_training(f.resume, o, data);
  std::cout << "epochs " << r.epochs_completed << (r.stopped_early ? " (early stop)" : "") << '\n';
  if (r.best_epoch >= 0)
    std::cout << "best valid F_" << o.valid_iw << " " << r.best_valid << " at epoch " << r.best_epoch << '\n';
  if (r.test_bound)
    std::cout << "test F_" << o.test_iw << " " << *r.test_bound << " +- " << *r.test_standard_error << '\n';
  return 0;
}

int cmd_evaluate(const CheckpointFlags& f, int iw, int chunk, const std::string& metrics) {
  Loaded l = open_checkpoint(f.checkpoint);
  const Dataset d = split_of(f, l.meta);
  const std::uint64_t seed = run_seed(f, l.meta);
  const Matrix x = evaluation_binarize(d.images, seed, d.split);
  Rng rng = Rng::derive(f.seed, 7);
  const IWEstimate e = iw_bound(l.model, x, iw, rng, chunk);
  std::cout << "F_" << iw << " " << e.bound << " +- " << e.standard_error << " nats (" << x.rows()
            << " " << f.split << " examples)\n";
  if (!metrics.empty()) {
    MetricsLog log(metrics, false);
    const int epoch = l.meta.contains("train") ? l.meta["train"].value("epoch", 0) : 0;
    log.write({fs::path(f.checkpoint).stem().string(), epoch, f.split + "_F", e.bound, iw, f.seed});
  }
  return 0;
}

int cmd_classify(const CheckpointFlags& f, int samples) {
  Loaded l = open_checkpoint(f.checkpoint);
  if (l.model.config().variant != Variant::CaGeM) throw ConfigError("classify needs a cagem checkpoint");
  const Dataset d = split_of(f, l.meta);
  if (!d.labels) throw FormatError("split has no labels");
  if (d.classes != l.model.config().clusters)
    throw ConfigError("cluster count differs from the dataset's class count");
  const Matrix x = evaluation_binarize(d.images, run_seed(f, l.meta), d.split);
  Rng rng = Rng::derive(f.seed, 8);
  const ClassifierEstimates c = classify(l.model, x, samples, rng);
  std::cout << "q-classifier error " << 100.0 * error_rate(c.q, *d.labels) << "%\n";
  std::cout << "p-classifier error " << 100.0 * error_rate(c.p, *d.labels) << "%\n";
  return 0;
}

int cmd_sample(const std::string& checkpoint, int n, int cls, const std::string& grid, int columns,
               std::uint64_t seed, bool binary) {
  Loaded l = open_checkpoint(checkpoint);
  std::optional<int> y;
  if (cls >= 0) y = cls;
  Rng rng(seed);
  const Generated g = l.model.generate(n, y, rng, binary);
  const Matrix& img = binary ? g.binary : g.means;
  write_pgm_grid(grid, img, columns);
  std::cout << "wrote " << n << " samples to " << grid << '\n';
  return 0;
}

int cmd_diagnose(const CheckpointFlags& f, const std::string& latent) {
  Loaded l = open_checkpoint(f.checkpoint);
  const Dataset d = split_of(f, l.meta);
  const Matrix x = evaluation_binarize(d.images, run_seed(f, l.meta), d.split);
  Rng rng = Rng::derive(f.seed, 9);
  const ElboDecomposition e = elbo_decompose(l.model, x, rng);
  std::cout << "examples        " << e.examples << '\n'
            << "elbo            " << e.elbo << '\n'
            << "reconstruction  " << e.reconstruction << '\n'
            << "z1 term         " << e.z1_term << '\n'
            << "z2 log ratio    " << e.z2_log_ratio << '\n'
            << "kl_z2           " << e.activity.kl_z2 << '\n'
            << "kl_z1           " << e.activity.kl_z1 << '\n';
  if (!latent.empty()) {
    const LatentTable t = latent_export(l.model, x, d.labels);
    std::ofstream out(latent);
    write_latent_table(out, t);
    if (!out) throw FormatError("cannot write " + latent);
    std::cout << "latent table    " << latent << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  configure_allocator();
  CLI::App app{"Cluster-aware hierarchical VAE: training and evaluation"};
  app.require_subcommand(1);

  TrainFlags tf;
  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--dataset", tf.dataset)->check(CLI::IsMember({"mnist", "omniglot"}));
  train->add_option("--data-dir", tf.data, "Dataset directory");
  train->add_option("--variant", tf.variant)->check(CLI::IsMember({"vae", "cagem"}));
  train->add_option("--labels", tf.labels, "Labelled examples (0: unsupervised)")->check(CLI::NonNegativeNumber);
  train->add_option("--clusters", tf.clusters, "Cluster count K (default: class count)");
  train->add_option("--beta", tf.opt.beta, "Cross-entropy weight beta")->check(CLI::NonNegativeNumber);
  train->add_option("--seed", tf.opt.seed);
  train->add_option("--epochs", tf.opt.schedule.epochs)->check(CLI::NonNegativeNumber);
  train->add_option("--out", tf.out, "Run directory")->required();
  train->add_option("--resume", tf.resume, "Continue from a last.ckpt of the same run");
  train->add_option("--hidden", tf.hidden, "Hidden widths of every network")->expected(0, -1);
  train->add_option("--z1", tf.z1)->check(CLI::PositiveNumber);
  train->add_option("--z2", tf.z2)->check(CLI::PositiveNumber);
  train->add_flag("--no-skip", tf.no_skip, "Drop the x input of q(z2|x,y,z1)");
  train->add_flag("--no-batch-norm", tf.no_bn);
  train->add_option("--lr", tf.opt.schedule.lr0);
  train->add_option("--warmup", tf.opt.schedule.warmup_epochs, "Epochs until tau reaches 1");
  train->add_option("--batch-size", tf.opt.schedule.batch_size);
  train->add_option("--labelled-batch-size", tf.opt.schedule.labelled_batch_size);
  train->add_option("--valid-size", tf.valid_size, "Training examples held out for validation");
  train->add_option("--eval-every", tf.opt.eval_every);
  train->add_option("--valid-iw", tf.opt.valid_iw)->check(CLI::PositiveNumber);
  train->add_option("--valid-examples", tf.opt.valid_examples);
  train->add_option("--patience", tf.opt.patience, "Epochs without validation improvement before stopping");
  train->add_option("--checkpoint-every", tf.opt.checkpoint_every);
  train->add_option("--sample-every", tf.opt.sample_every);
  train->add_option("--test-iw", tf.opt.test_iw, "Importance samples for the final test bound (0: skip)");
  train->add_option("--test-examples", tf.opt.test_examples);
  train->add_option("--run-id", tf.opt.run_id);
  train->add_flag("--verbose", tf.opt.verbose);

  CheckpointFlags ef;
  int iw = 5000, chunk = kDefaultIwChunk;
  std::string metrics;
  auto* evaluate = app.add_subcommand("evaluate", "Importance-weighted bound F_L");
  add_checkpoint_flags(evaluate, ef);
  evaluate->add_option("--iw", iw, "Importance samples L")->check(CLI::PositiveNumber);
  evaluate->add_option("--chunk", chunk)->check(CLI::PositiveNumber);
  evaluate->add_option("--metrics", metrics, "Append the result to this metrics log");

  CheckpointFlags cf;
  int samples = 100;
  auto* classify_cmd = app.add_subcommand("classify", "Error rates of both classifiers");
  add_checkpoint_flags(classify_cmd, cf);
  classify_cmd->add_option("--samples", samples, "Monte Carlo samples S")->check(CLI::PositiveNumber);

  std::string sck, grid = "samples.pgm";
  int n = 100, cls = -1, columns = 10;
  std::uint64_t sseed = 1;
  bool binary = false;
  auto* sample = app.add_subcommand("sample", "Write generated images as a PGM grid");
  sample->add_option("--checkpoint", sck)->required();
  sample->add_option("--n", n)->check(CLI::NonNegativeNumber);
  sample->add_option("--class", cls, "Condition on this cluster");
  sample->add_option("--grid", grid, "Output PGM file");
  sample->add_option("--columns", columns)->check(CLI::PositiveNumber);
  sample->add_option("--seed", sseed);
  sample->add_flag("--binary", binary, "Draw binary pixels instead of writing means");

  CheckpointFlags df;
  std::string latent;
  auto* diagnose = app.add_subcommand("diagnose", "ELBO decomposition, layer activity, latent export");
  add_checkpoint_flags(diagnose, df);
  diagnose->add_option("--latent", latent, "Write posterior means and PCA projections here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train) return cmd_train(tf);
    if (*evaluate) return cmd_evaluate(ef, iw, chunk, metrics);
    if (*classify_cmd) return cmd_classify(cf, samples);
    if (*sample) return cmd_sample(sck, n, cls, grid, columns, sseed, binary);
    if (*diagnose) return cmd_diagnose(df, latent);
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure in " << e.term() << ": " << e.what() << '\n';
    return kExitNumerical;
  } catch (const FormatError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const DimensionError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const DomainError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
