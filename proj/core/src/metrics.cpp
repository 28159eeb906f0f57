// SPDX-License-Identifier: Apache-2.0
#include "decaylens/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace decaylens {

std::pair<LogitsBatch, LabelsBatch> shift_align(const LogitsBatch& logits,
                                                const LabelsBatch& labels) {
  if (logits.batch != labels.batch || logits.positions != labels.positions) {
    throw std::invalid_argument("shift_align: logits/labels shape mismatch");
  }
  if (logits.positions < 2) {
    throw std::invalid_argument("shift_align: needs at least 2 positions");
  }
  LogitsBatch out_logits;
  out_logits.batch = logits.batch;
  out_logits.positions = logits.positions - 1;
  out_logits.vocab = logits.vocab;
  out_logits.data.resize(static_cast<std::size_t>(out_logits.batch) * out_logits.positions *
                         out_logits.vocab);
  LabelsBatch out_labels;
  out_labels.batch = labels.batch;
  out_labels.positions = labels.positions - 1;
  out_labels.data.resize(static_cast<std::size_t>(out_labels.batch) * out_labels.positions);
  for (int b = 0; b < logits.batch; ++b) {
    for (int c = 0; c + 1 < logits.positions; ++c) {
      for (int v = 0; v < logits.vocab; ++v) {
        out_logits.at(b, c, v) = logits.at(b, c, v);
      }
      out_labels.at(b, c) = labels.at(b, c + 1);
    }
  }
  return {std::move(out_logits), std::move(out_labels)};
}

double per_token_ce(std::span<const double> logit_row, TokenId label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logit_row.size()) {
    throw std::out_of_range("per_token_ce: label out of range");
  }
  double max_logit = -std::numeric_limits<double>::infinity();
  for (double z : logit_row) {
    if (!std::isfinite(z)) {
      throw std::invalid_argument("per_token_ce: non-finite logit");
    }
    max_logit = std::max(max_logit, z);
  }
  double sum = 0.0;
  for (double z : logit_row) {
    sum += std::exp(z - max_logit);
  }
  return std::log(sum) - (logit_row[static_cast<std::size_t>(label)] - max_logit);
}

TokenId argmax_predict(std::span<const double> logit_row) {
  if (logit_row.empty()) {
    throw std::invalid_argument("argmax_predict: empty row");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < logit_row.size(); ++i) {
    if (logit_row[i] > logit_row[best]) {
      best = i;
    }
  }
  return static_cast<TokenId>(best);
}

TokenMetricsStore::TokenMetricsStore(std::int32_t vocab_size) : vocab_size_(vocab_size) {
  if (vocab_size <= 0) {
    throw std::invalid_argument("TokenMetricsStore: vocab_size must be positive");
  }
  per_token_.resize(static_cast<std::size_t>(vocab_size));
}

void TokenMetricsStore::accumulate(TokenId label, double loss, bool correct) {
  if (label < 0 || label >= vocab_size_) {
    throw std::out_of_range("accumulate: label out of range");
  }
  if (loss < 0.0 || !std::isfinite(loss)) {
    throw std::invalid_argument("accumulate: loss must be finite and >= 0");
  }
  auto& counters = per_token_[static_cast<std::size_t>(label)];
  counters.loss_sum += loss;
  counters.occurrences += 1;
  counters.correct += correct ? 1 : 0;
  total_loss_sum_ += loss;
  total_positions_ += 1;
}

void TokenMetricsStore::merge(const TokenMetricsStore& other) {
  if (other.vocab_size_ != vocab_size_) {
    throw std::invalid_argument("merge: vocab size mismatch");
  }
  for (std::int32_t k = 0; k < vocab_size_; ++k) {
    auto& mine = per_token_[static_cast<std::size_t>(k)];
    const auto& theirs = other.per_token_[static_cast<std::size_t>(k)];
    mine.loss_sum += theirs.loss_sum;
    mine.occurrences += theirs.occurrences;
    mine.correct += theirs.correct;
  }
  total_loss_sum_ += other.total_loss_sum_;
  total_positions_ += other.total_positions_;
}

double TokenMetricsStore::average_loss() const {
  if (total_positions_ == 0) {
    throw std::logic_error("average_loss: empty store");
  }
  return total_loss_sum_ / static_cast<double>(total_positions_);
}

double TokenMetricsStore::token_balanced_loss() const {
  double sum = 0.0;
  std::int64_t observed = 0;
  for (const auto& counters : per_token_) {
    if (counters.occurrences > 0) {
      sum += counters.loss_sum / static_cast<double>(counters.occurrences);
      ++observed;
    }
  }
  if (observed == 0) {
    throw std::logic_error("token_balanced_loss: no observed tokens");
  }
  return sum / static_cast<double>(observed);
}

double TokenMetricsStore::per_token_perplexity() const { return std::exp(token_balanced_loss()); }

double TokenMetricsStore::per_token_accuracy() const {
  double sum = 0.0;
  std::int64_t observed = 0;
  for (const auto& counters : per_token_) {
    if (counters.occurrences > 0) {
      sum += static_cast<double>(counters.correct) / static_cast<double>(counters.occurrences);
      ++observed;
    }
  }
  if (observed == 0) {
    throw std::logic_error("per_token_accuracy: no observed tokens");
  }
  return sum / static_cast<double>(observed);
}

std::int32_t TokenMetricsStore::observed_tokens() const {
  std::int32_t observed = 0;
  for (const auto& counters : per_token_) {
    if (counters.occurrences > 0) {
      ++observed;
    }
  }
  return observed;
}

const TokenCounters& TokenMetricsStore::counters(TokenId id) const {
  if (id < 0 || id >= vocab_size_) {
    throw std::out_of_range("counters: id out of range");
  }
  return per_token_[static_cast<std::size_t>(id)];
}

double learning_speed(const TokenTrajectory& trajectory) {
  const auto& points = trajectory.checkpoints;
  if (points.size() < 2) {
    throw std::invalid_argument("learning_speed: needs at least 2 checkpoints");
  }
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (points[i].step <= points[i - 1].step) {
      throw std::invalid_argument("learning_speed: steps must be strictly increasing");
    }
  }
  double lo = points[0].mean_loss;
  double hi = points[0].mean_loss;
  for (const auto& point : points) {
    lo = std::min(lo, point.mean_loss);
    hi = std::max(hi, point.mean_loss);
  }
  if (hi == lo) {
    return 0.0;  // no learning signal when the range is zero
  }
  const double range = hi - lo;
  const double intervals = static_cast<double>(points.size() - 1);
  double auc = 0.0;
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    const double a = (points[i].mean_loss - lo) / range;
    const double b = (points[i + 1].mean_loss - lo) / range;
    auc += 0.5 * (a + b);  // unit spacing on the checkpoint index axis
  }
  return 1.0 - auc / intervals;
}

std::vector<BinSummary> bin_and_summarize(std::span<const double> stat_by_token,
                                          const FrequencyTable& table, FrequencyKind kind) {
  if (stat_by_token.size() != static_cast<std::size_t>(table.vocab_size)) {
    throw std::invalid_argument("bin_and_summarize: statistic length must equal vocab size");
  }
  const auto bins = histogram_base3(table, kind);
  std::vector<BinSummary> out;
  out.reserve(bins.size());
  for (const auto& bin : bins) {
    BinSummary summary;
    summary.index = bin.index;
    summary.lower = bin.lower;
    summary.upper = bin.upper;
    summary.token_fraction = bin.token_fraction;
    double sum = 0.0;
    std::size_t n = 0;
    for (TokenId id : bin.members) {
      const double v = stat_by_token[static_cast<std::size_t>(id)];
      if (!std::isnan(v)) {
        sum += v;
        ++n;
      }
    }
    summary.member_count = n;
    if (n > 0) {
      const double mean = sum / static_cast<double>(n);
      double sq = 0.0;
      for (TokenId id : bin.members) {
        const double v = stat_by_token[static_cast<std::size_t>(id)];
        if (!std::isnan(v)) {
          sq += (v - mean) * (v - mean);
        }
      }
      summary.mean = mean;
      summary.stddev = std::sqrt(sq / static_cast<double>(n));
    }
    out.push_back(std::move(summary));
  }
  return out;
}

}  // namespace decaylens
