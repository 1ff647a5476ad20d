// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

// Append-only line-delimited JSON metrics log.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace cagem {

struct MetricRecord {
  std::string run_id;
  int epoch = 0;
  std::string metric;
  double value = 0.0;
  int iw = 0;  // importance samples behind the value; 0 when not applicable
  std::uint64_t seed = 0;
};

class MetricsLog {
 public:
  MetricsLog() = default;
  /// Opens for appending; `truncate` starts a fresh file.
  MetricsLog(const std::filesystem::path& path, bool truncate);

  void write(const MetricRecord& record);
  bool is_open() const { return out_.is_open(); }

 private:
  std::ofstream out_;
};

std::string to_json_line(const MetricRecord& record);
std::vector<MetricRecord> read_metrics(const std::filesystem::path& path);

}  // namespace cagem
