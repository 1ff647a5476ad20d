// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

#include "cagem/metrics.hpp"

#include "json.hpp"

#include "cagem/errors.hpp"

namespace cagem {

MetricsLog::MetricsLog(const std::filesystem::path& path, bool truncate)
    : out_(path, truncate ? std::ios::trunc : std::ios::app) {
  if (!out_) throw FormatError("cannot open metrics log " + path.string());
}

std::string to_json_line(const MetricRecord& r) {
  nlohmann::json j{{"run_id", r.run_id}, {"epoch", r.epoch}, {"metric", r.metric},
                   {"value", r.value},   {"iw", r.iw},       {"seed", r.seed}};
  return j.dump();
}

void MetricsLog::write(const MetricRecord& record) {
  out_ << to_json_line(record) << '\n';
  out_.flush();
}

std::vector<MetricRecord> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open metrics log " + path.string());
  std::vector<MetricRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    out.push_back({j.at("run_id"), j.at("epoch"), j.at("metric"), j.at("value"), j.at("iw"),
                   j.at("seed")});
  }
  return out;
}

}  // namespace cagem
