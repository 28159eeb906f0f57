// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "decaylens/frequency.hpp"
#include "decaylens/metrics_log.hpp"
#include "decaylens/model.hpp"

namespace decaylens {

struct EvalSnapshot {
  std::int64_t step = 0;
  TokenMetricsStore store;
};

struct TrainResult {
  TrainConfig config;
  ModelParams params;
  FrequencyTable frequency;  // counts over the training corpus
  std::vector<EvalSnapshot> checkpoints;

  const EvalSnapshot& final_checkpoint() const;
};

// Runs total_steps of uniformly sampled context windows; every eval_every
// steps (and at the final step) evaluates the fixed slice and emits a
// checkpoint to the sink. Deterministic: identical (config, corpus) pairs
// produce identical logs.
TrainResult train(const TrainConfig& config, std::span<const std::vector<TokenId>> corpus,
                  MetricsSink* sink = nullptr);

struct SweepRunOutcome {
  double lambda = 0.0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::filesystem::path log_path;  // empty when logging was disabled
  double final_avg_loss = 0.0;
  double final_tok_bal_loss = 0.0;
  double final_ppl = 0.0;
  double final_acc = 0.0;
};

// Table-style aggregation over seeds (mean and sample standard deviation).
struct SweepAggregate {
  double lambda = 0.0;
  int runs = 0;
  double avg_loss_mean = 0.0, avg_loss_std = 0.0;
  double tok_bal_loss_mean = 0.0, tok_bal_loss_std = 0.0;
  double ppl_mean = 0.0, ppl_std = 0.0;
  double acc_mean = 0.0, acc_std = 0.0;
};

struct SweepResult {
  std::vector<SweepRunOutcome> runs;
  std::vector<SweepAggregate> aggregates;  // one per lambda, grid order
  bool all_ok = false;
};

// One run per (lambda, seed), parallel across runs up to the thread budget.
// A failing run is recorded and the sweep continues. When out_dir is given,
// each run writes out_dir/run_lambda<L>_seed<S>.jsonl.
SweepResult sweep(const TrainConfig& base_config, std::span<const double> lambdas,
                  std::span<const std::uint64_t> seeds,
                  std::span<const std::vector<TokenId>> corpus,
                  const std::optional<std::filesystem::path>& out_dir);

}  // namespace decaylens
