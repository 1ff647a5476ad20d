// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <limits>
#include <sstream>

#include "cagem/checkpoint.hpp"
#include "cagem/errors.hpp"
#include "cagem/metrics.hpp"
#include "cagem/train.hpp"
#include "helpers.hpp"
#include "json.hpp"

using namespace cagem;

namespace {

// Two noisy prototypes of 16 pixels, one per class.
Dataset make_split(int n, Split split, Rng& rng) {
  Dataset d;
  d.split = split;
  d.classes = 2;
  d.images.resize(n, 16);
  d.labels = IndexVector{};
  for (int i = 0; i < n; ++i) {
    const int c = i % 2;
    d.labels->push_back(c);
    for (int j = 0; j < 16; ++j) {
      const double base = ((j < 8) == (c == 0)) ? 0.85 : 0.1;
      d.images(i, j) = std::clamp(base + 0.1 * rng.normal(), 0.0, 1.0);
    }
  }
  return d;
}

DatasetTriplet synthetic() {
  Rng rng(700);
  return {make_split(40, Split::Train, rng), make_split(12, Split::Valid, rng), make_split(10, Split::Test, rng)};
}

TrainOptions options(const std::filesystem::path& dir, int epochs, int labels) {
  TrainOptions o;
  o.model = testing::toy_config(Variant::CaGeM, 16, 2, {6, 4}, true);
  o.schedule.epochs = epochs;
  o.schedule.batch_size = 16;
  o.schedule.labelled_batch_size = 4;
  o.schedule.warmup_epochs = 3;
  o.schedule.lr0 = 3e-3;
  o.dataset = "synthetic";
  o.n_labels = labels;
  o.seed = 17;
  o.eval_every = 1;
  o.valid_iw = 3;
  o.checkpoint_every = 2;
  o.test_iw = 0;
  o.run_dir = dir;
  o.run_id = "unit";
  return o;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("schedules") {
  Schedule s;
  CHECK(s.learning_rate(0) == doctest::Approx(0.001));
  CHECK(s.learning_rate(49) == doctest::Approx(0.001));
  CHECK(s.learning_rate(50) == doctest::Approx(0.00075));
  CHECK(s.learning_rate(100) == doctest::Approx(0.0005625));
  CHECK(s.temperature(0) == 0.0);
  CHECK(s.temperature(50) == doctest::Approx(0.5));
  CHECK(s.temperature(100) == 1.0);
  CHECK(s.temperature(250) == 1.0);
  Schedule none = s;
  none.warmup_epochs = 0;
  CHECK(none.temperature(0) == 1.0);
  Schedule bad = s;
  bad.lr0 = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = s;
  bad.batch_size = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("equal seeds give identical metrics logs") {
  const DatasetTriplet data = synthetic();
  testing::TempDir a("det_a"), b("det_b");
  TrainOptions oa = options(a.path(), 3, 4), ob = options(b.path(), 3, 4);
  oa.test_iw = ob.test_iw = 20;
  const TrainResult ra = run_training(oa, data);
  const TrainResult rb = run_training(ob, data);
  CHECK(ra.epochs_completed == 3);
  CHECK(ra.test_bound.has_value());
  CHECK(*ra.test_bound == *rb.test_bound);
  const std::string la = slurp(a / "metrics.jsonl");
  CHECK_FALSE(la.empty());
  CHECK(la == slurp(b / "metrics.jsonl"));
  CHECK(std::filesystem::exists(a / "best.ckpt"));
  CHECK(std::filesystem::exists(a / "last.ckpt"));
  CHECK(std::filesystem::exists(a / "config.json"));

  // lr and tau follow the schedule exactly; every record carries the run id and seed.
  const auto records = read_metrics(a / "metrics.jsonl");
  int seen = 0;
  for (const MetricRecord& r : records) {
    CHECK(r.run_id == "unit");
    CHECK(r.seed == 17);
    if (r.metric == "lr") CHECK(r.value == oa.schedule.learning_rate(r.epoch));
    if (r.metric == "tau") {
      CHECK(r.value == oa.schedule.temperature(r.epoch));
      ++seen;
    }
    if (r.metric == "valid_F") CHECK(r.iw == 3);
  }
  CHECK(seen == 3);

  TrainOptions oc = options(a.path(), 3, 4);
  oc.seed = 18;
  oc.run_dir = a / "other";
  run_training(oc, data);
  CHECK(slurp(oc.run_dir / "metrics.jsonl") != la);
}

TEST_CASE("resuming matches an uninterrupted run") {
  const DatasetTriplet data = synthetic();
  for (int labels : {0, 4}) {
    CAPTURE(labels);
    testing::TempDir straight("straight"), split("split");
    run_training(options(straight.path(), 4, labels), data);
    run_training(options(split.path(), 2, labels), data);
    resume_training(split / "last.ckpt", options(split.path(), 4, labels), data);
    CHECK(slurp(split / "metrics.jsonl") == slurp(straight / "metrics.jsonl"));
    const Archive x = read_archive(straight / "last.ckpt");
    const Archive y = read_archive(split / "last.ckpt");
    REQUIRE(x.arrays.size() == y.arrays.size());
    for (std::size_t i = 0; i < x.arrays.size(); ++i) {
      CHECK(x.arrays[i].first == y.arrays[i].first);
      CHECK(x.arrays[i].second == y.arrays[i].second);
    }
    CHECK(x.meta["train"]["rng"] == y.meta["train"]["rng"]);
  }
}

TEST_CASE("resume rejects incompatible runs") {
  const DatasetTriplet data = synthetic();
  testing::TempDir dir("reject");
  run_training(options(dir.path(), 2, 4), data);
  TrainOptions changed = options(dir.path(), 4, 4);
  changed.model.z1_dim = 3;
  CHECK_THROWS_AS(resume_training(dir / "last.ckpt", changed, data), ConfigError);
  TrainOptions labels = options(dir.path(), 4, 2);
  CHECK_THROWS_AS(resume_training(dir / "last.ckpt", labels, data), ConfigError);
  TrainOptions seed = options(dir.path(), 4, 4);
  seed.seed = 3;
  CHECK_THROWS_AS(resume_training(dir / "last.ckpt", seed, data), ConfigError);

  std::string bytes = slurp(dir / "last.ckpt");
  bytes[bytes.size() / 3] ^= 0x01;
  std::ofstream(dir / "bad.ckpt", std::ios::binary) << bytes;
  CHECK_THROWS_AS(resume_training(dir / "bad.ckpt", options(dir.path(), 4, 4), data), IntegrityError);
}

TEST_CASE("a non-finite step halts with a diagnostic dump") {
  const DatasetTriplet data = synthetic();
  testing::TempDir dir("halt");
  TrainOptions o = options(dir.path(), 3, 4);
  o.schedule.lr0 = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(run_training(o, data), NumericalError);
  CHECK(std::filesystem::exists(dir / "halt.ckpt"));
  REQUIRE(std::filesystem::exists(dir / "halt.json"));
  const nlohmann::json dump = nlohmann::json::parse(slurp(dir / "halt.json"));
  CHECK(dump.contains("term"));
  CHECK(dump["epoch"] == 0);
  CHECK_NOTHROW(read_archive(dir / "halt.ckpt"));
}

TEST_CASE("option checks") {
  const DatasetTriplet data = synthetic();
  testing::TempDir dir("opts");
  TrainOptions vae = options(dir.path(), 1, 4);
  vae.model.variant = Variant::VAE;
  CHECK_THROWS_AS(run_training(vae, data), ConfigError);
  TrainOptions clusters = options(dir.path(), 1, 4);
  clusters.model.clusters = 3;
  CHECK_THROWS_AS(run_training(clusters, data), ConfigError);
  TrainOptions width = options(dir.path(), 1, 0);
  width.model.x_dim = 10;
  CHECK_THROWS_AS(run_training(width, data), ConfigError);
  TrainOptions nodir = options("", 1, 0);
  CHECK_THROWS_AS(run_training(nodir, data), ConfigError);

  // Unsupervised runs of both variants complete.
  TrainOptions plain = options(dir / "vae", 2, 0);
  plain.model.variant = Variant::VAE;
  CHECK(run_training(plain, data).epochs_completed == 2);
}

TEST_CASE("evaluation binarization is fixed per split") {
  Rng rng(701);
  const Matrix img = Matrix::Constant(20, 30, 0.5);
  const Matrix a = evaluation_binarize(img, 5, Split::Valid);
  CHECK(a == evaluation_binarize(img, 5, Split::Valid));
  CHECK(a != evaluation_binarize(img, 5, Split::Test));
  CHECK(a != evaluation_binarize(img, 6, Split::Valid));
  CHECK(((a.array() == 0.0) || (a.array() == 1.0)).all());
}
