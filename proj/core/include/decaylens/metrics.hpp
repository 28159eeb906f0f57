// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "decaylens/frequency.hpp"
#include "decaylens/types.hpp"

namespace decaylens {

// [B, C, V] row-major logits.
struct LogitsBatch {
  int batch = 0;
  int positions = 0;
  int vocab = 0;
  std::vector<double> data;

  double& at(int b, int c, int v) {
    return data[(static_cast<std::size_t>(b) * positions + c) * vocab + v];
  }
  double at(int b, int c, int v) const {
    return data[(static_cast<std::size_t>(b) * positions + c) * vocab + v];
  }
  std::span<const double> row(int b, int c) const {
    return {data.data() + (static_cast<std::size_t>(b) * positions + c) * vocab,
            static_cast<std::size_t>(vocab)};
  }
};

// [B, C] labels, row-major.
struct LabelsBatch {
  int batch = 0;
  int positions = 0;
  std::vector<TokenId> data;

  TokenId& at(int b, int c) { return data[static_cast<std::size_t>(b) * positions + c]; }
  TokenId at(int b, int c) const { return data[static_cast<std::size_t>(b) * positions + c]; }
};

// Drops the last logit position and the first label position so that output
// position t pairs the logits at input position t with the label at t+1.
std::pair<LogitsBatch, LabelsBatch> shift_align(const LogitsBatch& logits,
                                                const LabelsBatch& labels);

// -log softmax(logit_row)[label], via a numerically stable log-sum-exp.
// Throws on non-finite logits or label out of range.
double per_token_ce(std::span<const double> logit_row, TokenId label);

// argmax with lowest-index tie-break.
TokenId argmax_predict(std::span<const double> logit_row);

struct TokenCounters {
  double loss_sum = 0.0;
  std::int64_t occurrences = 0;
  std::int64_t correct = 0;
};

// Streaming per-token accumulators. Shardable: accumulate into independent
// stores, then merge (associative and commutative). A single instance is not
// safe for concurrent mutation; finished stores are safe to read concurrently.
// All accumulation in double precision.
class TokenMetricsStore {
 public:
  explicit TokenMetricsStore(std::int32_t vocab_size);

  void accumulate(TokenId label, double loss, bool correct);
  void merge(const TokenMetricsStore& other);

  double average_loss() const;         // total loss / total positions
  double token_balanced_loss() const;  // mean over observed tokens of per-token mean loss
  double per_token_perplexity() const; // exp(token_balanced_loss)
  double per_token_accuracy() const;   // mean over observed tokens of per-token accuracy

  std::int32_t vocab_size() const { return vocab_size_; }
  std::int64_t total_positions() const { return total_positions_; }
  double total_loss_sum() const { return total_loss_sum_; }
  std::int32_t observed_tokens() const;
  const TokenCounters& counters(TokenId id) const;

 private:
  std::int32_t vocab_size_;
  std::vector<TokenCounters> per_token_;
  double total_loss_sum_ = 0.0;
  std::int64_t total_positions_ = 0;
};

struct TrajectoryPoint {
  std::int64_t step = 0;
  double mean_loss = 0.0;
};

struct TokenTrajectory {
  TokenId token = -1;
  std::vector<TrajectoryPoint> checkpoints;  // steps strictly increasing
};

// 1 - AUC/T of the min-max normalized loss trajectory, trapezoidal rule over
// the checkpoint index axis (T = checkpoints - 1 intervals). Exactly 0 when
// the loss range is zero. Throws with fewer than 2 checkpoints.
double learning_speed(const TokenTrajectory& trajectory);

struct BinSummary {
  int index = 0;
  std::int64_t lower = 0;
  std::int64_t upper = 0;
  std::size_t member_count = 0;       // bin members carrying the statistic
  double token_fraction = 0.0;        // bin size / observed tokens
  std::optional<double> mean;         // null for empty bins, never dropped
  std::optional<double> stddev;       // population standard deviation
};

// Per-token statistic values aligned with token ids; NaN marks "no value".
std::vector<BinSummary> bin_and_summarize(std::span<const double> stat_by_token,
                                          const FrequencyTable& table, FrequencyKind kind);

}  // namespace decaylens
