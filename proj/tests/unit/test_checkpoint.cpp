// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstring>
#include <fstream>

#include "cagem/checkpoint.hpp"
#include "cagem/errors.hpp"
#include "cagem/objective.hpp"
#include "helpers.hpp"

using namespace cagem;

namespace {

std::vector<unsigned char> read_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

void write_bytes(const std::filesystem::path& p, const std::vector<unsigned char>& b) {
  std::ofstream f(p, std::ios::binary);
  f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

// Bitwise reflected CRC-32 (polynomial 0xEDB88320).
std::uint32_t crc32_reference(const unsigned char* data, std::size_t n) {
  std::uint32_t c = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) {
    c ^= data[i];
    for (int k = 0; k < 8; ++k) c = (c >> 1) ^ (0xEDB88320u & (0u - (c & 1u)));
  }
  return ~c;
}

void reseal(std::vector<unsigned char>& b) {
  const std::uint32_t crc = crc32_reference(b.data(), b.size() - 4);
  for (int i = 0; i < 4; ++i) b[b.size() - 4 + i] = static_cast<unsigned char>(crc >> (8 * i));
}

Archive sample_archive() {
  Archive a;
  a.meta["name"] = "demo";
  a.meta["step"] = 12;
  Matrix m(2, 3);
  m << 1, 2, 3, 4, 5, -6.5;
  a.arrays.emplace_back("first", m);
  a.arrays.emplace_back("empty", Matrix(0, 4));
  a.arrays.emplace_back("scalar", Matrix::Constant(1, 1, 3.14159));
  return a;
}

}  // namespace

TEST_CASE("archive round trip and layout") {
  testing::TempDir dir("ckpt");
  const Archive a = sample_archive();
  write_archive(dir / "a.ckpt", a);
  CHECK_FALSE(std::filesystem::exists(dir / "a.ckpt.tmp"));
  const Archive b = read_archive(dir / "a.ckpt");
  CHECK(b.meta == a.meta);
  REQUIRE(b.arrays.size() == 3);
  CHECK(b.array("first") == a.array("first"));
  CHECK(b.array("empty").cols() == 4);
  CHECK(b.array("scalar")(0, 0) == 3.14159);
  CHECK_FALSE(b.has_array("missing"));
  CHECK_THROWS_AS(b.array("missing"), FormatError);

  const auto bytes = read_bytes(dir / "a.ckpt");
  CHECK(std::memcmp(bytes.data(), "CAGEMCKP", 8) == 0);
  CHECK(bytes[8] == kCheckpointVersion);
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[bytes.size() - 4 + i]) << (8 * i);
  CHECK(stored == crc32_reference(bytes.data(), bytes.size() - 4));
}

TEST_CASE("damaged archives are rejected") {
  testing::TempDir dir("damage");
  write_archive(dir / "a.ckpt", sample_archive());
  const auto bytes = read_bytes(dir / "a.ckpt");

  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  write_bytes(dir / "flip.ckpt", flipped);
  CHECK_THROWS_AS(read_archive(dir / "flip.ckpt"), IntegrityError);

  write_bytes(dir / "cut.ckpt", std::vector<unsigned char>(bytes.begin(), bytes.end() - 9));
  CHECK_THROWS_AS(read_archive(dir / "cut.ckpt"), IntegrityError);

  auto magic = bytes;
  magic[0] = 'X';
  reseal(magic);
  write_bytes(dir / "magic.ckpt", magic);
  try {
    read_archive(dir / "magic.ckpt");
    FAIL("expected a format error");
  } catch (const IntegrityError&) {
    FAIL("bad magic reported as a checksum failure");
  } catch (const FormatError&) {
  }

  auto version = bytes;
  version[8] = static_cast<unsigned char>(kCheckpointVersion + 1);
  reseal(version);
  write_bytes(dir / "version.ckpt", version);
  try {
    read_archive(dir / "version.ckpt");
    FAIL("expected a format error");
  } catch (const IntegrityError&) {
    FAIL("version mismatch reported as a checksum failure");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }

  CHECK_THROWS_AS(read_archive(dir / "absent.ckpt"), FormatError);
}

TEST_CASE("model and optimizer state survive a round trip") {
  testing::TempDir dir("model");
  Rng rng(600);
  ModelConfig cfg = testing::toy_config(Variant::CaGeM, 5, 3, {4}, true);
  cfg.skip_connection = false;
  Model m(cfg, 1);
  Adam adam(m.params());
  const Matrix x = testing::random_binary(6, 5, rng);
  for (int i = 0; i < 3; ++i) training_step(m, adam, x, std::nullopt, 0.5, 0.0, 1e-2, rng);

  Archive a;
  add_model(a, m);
  add_optimizer(a, adam, m.params());
  write_archive(dir / "m.ckpt", a);
  const Archive b = read_archive(dir / "m.ckpt");
  Model loaded = load_model(b);
  CHECK(loaded.config() == cfg);
  for (std::size_t i = 0; i < m.params().parameters().size(); ++i)
    CHECK(loaded.params().parameters()[i].value == m.params().parameters()[i].value);
  for (std::size_t i = 0; i < m.params().buffers().size(); ++i)
    CHECK(loaded.params().buffers()[i].value == m.params().buffers()[i].value);
  Adam restored(loaded.params());
  restore_optimizer(b, restored, loaded.params());
  CHECK(restored.steps() == 3);
  for (std::size_t i = 0; i < adam.first_moments().size(); ++i) {
    CHECK(restored.first_moments()[i] == adam.first_moments()[i]);
    CHECK(restored.second_moments()[i] == adam.second_moments()[i]);
  }

  // Both copies continue identically.
  Rng r1(5), r2(5);
  training_step(m, adam, x, std::nullopt, 0.5, 0.0, 1e-2, r1);
  training_step(loaded, restored, x, std::nullopt, 0.5, 0.0, 1e-2, r2);
  for (std::size_t i = 0; i < m.params().parameters().size(); ++i)
    CHECK(loaded.params().parameters()[i].value == m.params().parameters()[i].value);

  ModelConfig other = cfg;
  other.z1_dim = 3;
  Model wrong(other, 1);
  CHECK_THROWS_AS(restore_model(b, wrong), ConfigError);
  CHECK(config_from_json(config_to_json(other)) == other);
}
