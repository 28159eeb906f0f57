// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <vector>

#include "decaylens/metrics.hpp"
#include "decaylens/types.hpp"

namespace decaylens {

// One JSON Lines record per evaluation checkpoint:
// {"version":1,"step":S,"lambda":L,"seed":R,
//  "global":{"avg_loss":..,"tok_bal_loss":..,"ppl":..,"acc":..},
//  "per_token":[{"id":..,"n":..,"loss_mean":..,"acc":..},...]}
struct PerTokenRecord {
  TokenId id = -1;
  std::int64_t n = 0;
  double loss_mean = 0.0;
  double acc = 0.0;
};

struct CheckpointRecord {
  std::int64_t step = 0;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  double avg_loss = 0.0;
  double tok_bal_loss = 0.0;
  double ppl = 0.0;
  double acc = 0.0;
  std::vector<PerTokenRecord> per_token;
};

std::string checkpoint_record_json(const CheckpointRecord& record);
CheckpointRecord make_checkpoint_record(std::int64_t step, double lambda, std::uint64_t seed,
                                        const TokenMetricsStore& store);

std::vector<CheckpointRecord> read_metric_log(const std::filesystem::path& path);

// Per-token loss trajectories over the checkpoints of one run. A token
// contributes a point only at checkpoints where it occurred.
std::vector<TokenTrajectory> trajectories_from_log(const std::vector<CheckpointRecord>& records);

class MetricsSink {
 public:
  virtual ~MetricsSink() = default;
  virtual void on_checkpoint(const CheckpointRecord& record) = 0;
};

class JsonlMetricsSink : public MetricsSink {
 public:
  explicit JsonlMetricsSink(const std::filesystem::path& path);
  void on_checkpoint(const CheckpointRecord& record) override;
  void close();  // flush + rename into place
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::filesystem::path tmp_path_;
  std::ofstream out_;
};

class MemoryMetricsSink : public MetricsSink {
 public:
  void on_checkpoint(const CheckpointRecord& record) override { records_.push_back(record); }
  const std::vector<CheckpointRecord>& records() const { return records_; }

 private:
  std::vector<CheckpointRecord> records_;
};

}  // namespace decaylens
