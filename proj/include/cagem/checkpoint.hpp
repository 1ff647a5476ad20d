// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

// Self-describing binary archive of named double arrays plus a JSON header.
//
// Layout (little-endian):
//   8 bytes   magic "CAGEMCKP"
//   u32       format version
//   u64       header length H, then H bytes of JSON
//   u64       payload length P, then P bytes of raw doubles
//   u32       CRC-32 of every preceding byte
// The JSON header lists each array's name, shape and payload offset.

#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cagem/model.hpp"
#include "cagem/optimizer.hpp"
#include "cagem/tensor.hpp"

namespace cagem {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Archive {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Matrix>> arrays;

  /// Throws FormatError when absent.
  const Matrix& array(const std::string& name) const;
  bool has_array(const std::string& name) const;
};

/// Written to a temporary file and renamed into place.
void write_archive(const std::filesystem::path& path, const Archive& archive);
/// Throws IntegrityError on checksum mismatch or truncation and FormatError
/// on a wrong magic or version.
Archive read_archive(const std::filesystem::path& path);

nlohmann::json config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const nlohmann::json& j);

/// Parameters ("param/<name>"), batch-norm buffers ("buffer/<name>") and the
/// model config ("model" in meta).
void add_model(Archive& archive, const Model& model);
/// Builds a model from the archived config and copies every array in.
Model load_model(const Archive& archive);
/// Copies archived arrays into an existing model with the same config.
void restore_model(const Archive& archive, Model& model);

void add_optimizer(Archive& archive, const Adam& adam, const ParamStore& store);
void restore_optimizer(const Archive& archive, Adam& adam, const ParamStore& store);

}  // namespace cagem
