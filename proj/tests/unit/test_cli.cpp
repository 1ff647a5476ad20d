// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "cagem/data.hpp"
#include "cagem/metrics.hpp"
#include "helpers.hpp"

using namespace cagem;

namespace {

struct Result {
  int code;
  std::string out;
};

Result run(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd = std::string(CAGEM_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream f(log);
  std::ostringstream s;
  s << f.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, s.str()};
}

// A tiny mnist-shaped directory: 80 training and 20 test images of 28x28.
void write_mnist(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  Rng rng(900);
  const auto make = [&](int n, const std::string& img, const std::string& lbl) {
    Matrix x(n, 784);
    IndexVector y;
    for (int i = 0; i < n; ++i) {
      const int c = i % 10;
      y.push_back(c);
      for (int j = 0; j < 784; ++j) {
        const double base = (j / 78 == c) ? 0.9 : 0.05;
        x(i, j) = std::round(255.0 * std::clamp(base + 0.05 * rng.normal(), 0.0, 1.0)) / 255.0;
      }
    }
    write_idx_images(dir / img, x, IdxType::UByte);
    write_idx_labels(dir / lbl, y);
  };
  make(80, "train-images-idx3-ubyte", "train-labels-idx1-ubyte");
  make(20, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte");
}

const char* kTiny =
    " --hidden 8 --z1 4 --z2 2 --batch-size 10 --labelled-batch-size 10 --valid-size 20"
    " --valid-iw 2 --test-iw 3 --warmup 1";

}  // namespace

TEST_CASE("usage errors exit with 2") {
  testing::TempDir dir("cli_usage");
  write_mnist(dir / "mnist");
  const std::string data = " --data-dir " + (dir / "mnist").string();
  const auto log = dir / "log";
  CHECK(run("", log).code != 0);
  CHECK(run("train --no-such-flag --out " + (dir / "r").string(), log).code == 2);
  CHECK(run("train --variant vae --labels 100 --out " + (dir / "r").string() + data + kTiny, log).code == 2);
  CHECK(run("train --variant gmm --out " + (dir / "r").string(), log).code == 2);
  CHECK(run("train --clusters 1 --out " + (dir / "r").string() + data + kTiny, log).code == 2);
  CHECK(run("train --labels 10 --clusters 5 --out " + (dir / "r").string() + data + kTiny, log).code == 2);
  CHECK(run("evaluate --checkpoint x.ckpt --split bogus", log).code == 2);
  CHECK(run("train" + data, log).code == 2);
}

TEST_CASE("missing data exits with 3") {
  testing::TempDir dir("cli_missing");
  const auto log = dir / "log";
  const Result r = run("train --data-dir " + (dir / "nowhere").string() + " --out " +
                           (dir / "r").string() + kTiny,
                       log);
  CHECK(r.code == 3);
  CHECK(r.out.find("train-images-idx3-ubyte") != std::string::npos);
  CHECK(run("evaluate --checkpoint " + (dir / "none.ckpt").string(), log).code == 3);
  std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
  CHECK(run("evaluate --checkpoint " + (dir / "junk.ckpt").string(), log).code == 3);
}

TEST_CASE("train then use the checkpoint") {
  testing::TempDir dir("cli_flow");
  write_mnist(dir / "mnist");
  const std::string data = " --data-dir " + (dir / "mnist").string();
  const auto run_dir = dir / "run";
  const auto log = dir / "log";
  Result r = run("train --labels 10 --seed 4 --epochs 2 --out " + run_dir.string() + data + kTiny, log);
  INFO(r.out);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("epochs 2") != std::string::npos);
  CHECK(r.out.find("test F_3") != std::string::npos);
  const auto ckpt = (run_dir / "last.ckpt").string();
  REQUIRE(std::filesystem::exists(ckpt));
  const auto records = read_metrics(run_dir / "metrics.jsonl");
  bool saw_test = false;
  for (const MetricRecord& m : records) saw_test |= m.metric == "test_F";
  CHECK(saw_test);

  r = run("evaluate --checkpoint " + ckpt + data + " --iw 4 --chunk 2 --metrics " +
              (dir / "eval.jsonl").string(),
          log);
  CHECK(r.code == 0);
  CHECK(r.out.find("F_4") != std::string::npos);
  const auto eval = read_metrics(dir / "eval.jsonl");
  REQUIRE(eval.size() == 1);
  CHECK(eval[0].metric == "test_F");
  CHECK(eval[0].iw == 4);

  // Evaluation is reproducible for a fixed seed.
  const Result again = run("evaluate --checkpoint " + ckpt + data + " --iw 4 --chunk 2", log);
  CHECK(again.out == r.out.substr(0, again.out.size()));

  r = run("classify --checkpoint " + ckpt + data + " --split valid --samples 2", log);
  CHECK(r.code == 0);
  CHECK(r.out.find("q-classifier error") != std::string::npos);
  CHECK(r.out.find("p-classifier error") != std::string::npos);

  const auto grid = dir / "grid.pgm";
  r = run("sample --checkpoint " + ckpt + " --n 6 --class 3 --columns 3 --binary --grid " + grid.string(), log);
  CHECK(r.code == 0);
  REQUIRE(std::filesystem::exists(grid));
  std::ifstream pgm(grid, std::ios::binary);
  std::string magic;
  int w = 0, h = 0;
  pgm >> magic >> w >> h;
  CHECK(magic == "P5");
  CHECK(w >= 3 * 28);
  CHECK(h >= 2 * 28);

  const auto latent = dir / "latent.tsv";
  r = run("diagnose --checkpoint " + ckpt + data + " --examples 12 --latent " + latent.string(), log);
  CHECK(r.code == 0);
  CHECK(r.out.find("kl_z2") != std::string::npos);
  std::ifstream tsv(latent);
  std::string line;
  int lines = 0;
  while (std::getline(tsv, line)) ++lines;
  CHECK(lines == 13);

  // Resuming to a later epoch continues the same run.
  r = run("train --labels 10 --seed 4 --out " + run_dir.string() + data + kTiny +
              std::string(" --epochs 3 --resume ") + ckpt,
          log);
  CHECK(r.code == 0);
  CHECK(r.out.find("epochs 3") != std::string::npos);
}
