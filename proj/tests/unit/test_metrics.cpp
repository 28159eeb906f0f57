// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <vector>

#include "decaylens/metrics.hpp"
#include "decaylens/rng.hpp"

using namespace decaylens;

namespace {

struct Event {
  TokenId label;
  double loss;
  bool correct;
};

// Independent batch recomputation of every store statistic from the raw
// event list. Oracle for the streaming accumulator.
struct BatchOracle {
  double avg_loss = 0.0;
  double tok_bal = 0.0;
  double acc = 0.0;
  std::int64_t positions = 0;

  explicit BatchOracle(const std::vector<Event>& events, std::int32_t vocab) {
    std::vector<double> loss_sum(static_cast<std::size_t>(vocab), 0.0);
    std::vector<std::int64_t> count(static_cast<std::size_t>(vocab), 0);
    std::vector<std::int64_t> correct(static_cast<std::size_t>(vocab), 0);
    double total = 0.0;
    for (const auto& e : events) {
      loss_sum[static_cast<std::size_t>(e.label)] += e.loss;
      count[static_cast<std::size_t>(e.label)] += 1;
      correct[static_cast<std::size_t>(e.label)] += e.correct ? 1 : 0;
      total += e.loss;
    }
    positions = static_cast<std::int64_t>(events.size());
    avg_loss = total / static_cast<double>(events.size());
    double bal = 0.0;
    double acc_sum = 0.0;
    int observed = 0;
    for (std::int32_t k = 0; k < vocab; ++k) {
      if (count[static_cast<std::size_t>(k)] > 0) {
        bal += loss_sum[static_cast<std::size_t>(k)] /
               static_cast<double>(count[static_cast<std::size_t>(k)]);
        acc_sum += static_cast<double>(correct[static_cast<std::size_t>(k)]) /
                   static_cast<double>(count[static_cast<std::size_t>(k)]);
        ++observed;
      }
    }
    tok_bal = bal / observed;
    acc = acc_sum / observed;
  }
};

std::vector<Event> random_events(Rng& rng, std::size_t n, std::int32_t vocab) {
  std::vector<Event> events;
  events.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    events.push_back(Event{static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(vocab))),
                           rng.uniform(0.0, 5.0), rng.next_double() < 0.5});
  }
  return events;
}

}  // namespace

TEST_CASE("metrics: shift_align pairs position t with label t+1") {
  LogitsBatch logits{1, 2, 3, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6}};
  LabelsBatch labels{1, 2, {7, 8}};
  const auto [out_logits, out_labels] = shift_align(logits, labels);
  CHECK(out_logits.positions == 1);
  CHECK(out_labels.at(0, 0) == 8);
  CHECK(out_logits.at(0, 0, 0) == doctest::Approx(0.1));
  CHECK(out_logits.at(0, 0, 2) == doctest::Approx(0.3));
}

TEST_CASE("metrics: shift_align drops the last logit row, first label") {
  LogitsBatch logits{1, 3, 2, {1, 2, 3, 4, 5, 6}};
  LabelsBatch labels{1, 3, {7, 8, 9}};
  const auto [out_logits, out_labels] = shift_align(logits, labels);
  CHECK(out_labels.data == std::vector<TokenId>{8, 9});
  CHECK(out_logits.at(0, 1, 1) == doctest::Approx(4));
}

TEST_CASE("metrics: shift_align random batch matches index oracle") {
  Rng rng(11);
  LogitsBatch logits{2, 5, 4, {}};
  logits.data.resize(2 * 5 * 4);
  for (auto& v : logits.data) v = rng.uniform(-1, 1);
  LabelsBatch labels{2, 5, {}};
  labels.data.resize(10);
  for (auto& l : labels.data) l = static_cast<TokenId>(rng.below(4));
  const auto [out_logits, out_labels] = shift_align(logits, labels);
  for (int b = 0; b < 2; ++b) {
    for (int c = 0; c < 4; ++c) {
      CHECK(out_labels.at(b, c) == labels.at(b, c + 1));
      for (int v = 0; v < 4; ++v) {
        CHECK(out_logits.at(b, c, v) == logits.at(b, c, v));
      }
    }
  }
}

TEST_CASE("metrics: shift_align rejects single-position input") {
  LogitsBatch logits{1, 1, 2, {0.0, 0.0}};
  LabelsBatch labels{1, 1, {0}};
  CHECK_THROWS_AS(shift_align(logits, labels), std::invalid_argument);
}

TEST_CASE("metrics: per_token_ce uniform logits give log V") {
  const std::vector<double> row(4, 1.7);
  CHECK(per_token_ce(row, 2) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
}

TEST_CASE("metrics: per_token_ce saturates to ~0 at large margin") {
  std::vector<double> row(8, 0.0);
  row[3] = 50.0;
  CHECK(per_token_ce(row, 3) < 1e-15);
}

TEST_CASE("metrics: per_token_ce matches direct softmax oracle") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> row(10);
    for (auto& v : row) v = rng.uniform(-8, 8);
    const auto label = static_cast<TokenId>(rng.below(10));
    double denom = 0.0;
    for (const double z : row) denom += std::exp(z);
    const double expected = -std::log(std::exp(row[static_cast<std::size_t>(label)]) / denom);
    CHECK(per_token_ce(row, label) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("metrics: per_token_ce rejects non-finite logits") {
  std::vector<double> row = {0.0, std::numeric_limits<double>::infinity()};
  CHECK_THROWS(per_token_ce(row, 0));
}

TEST_CASE("metrics: argmax tie-break picks lowest index") {
  const std::vector<double> row = {1.0, 3.0, 3.0, 0.5};
  CHECK(argmax_predict(row) == 1);
}

TEST_CASE("metrics: accumulate updates counters") {
  TokenMetricsStore store(8);
  store.accumulate(3, 0.5, true);
  CHECK(store.counters(3).occurrences == 1);
  CHECK(store.counters(3).loss_sum == doctest::Approx(0.5));
  CHECK(store.counters(3).correct == 1);
  CHECK(store.total_positions() == 1);
}

TEST_CASE("metrics: accumulation is order independent") {
  TokenMetricsStore a(4), b(4);
  a.accumulate(0, 1.0, true);
  a.accumulate(1, 2.0, false);
  b.accumulate(1, 2.0, false);
  b.accumulate(0, 1.0, true);
  CHECK(a.average_loss() == b.average_loss());
  CHECK(a.token_balanced_loss() == b.token_balanced_loss());
}

TEST_CASE("metrics: streaming equals batch recomputation") {
  Rng rng(99);
  const auto events = random_events(rng, 10000, 64);
  TokenMetricsStore store(64);
  for (const auto& e : events) store.accumulate(e.label, e.loss, e.correct);
  const BatchOracle oracle(events, 64);
  CHECK(store.average_loss() == doctest::Approx(oracle.avg_loss).epsilon(1e-13));
  CHECK(store.token_balanced_loss() == doctest::Approx(oracle.tok_bal).epsilon(1e-13));
  CHECK(store.per_token_accuracy() == doctest::Approx(oracle.acc).epsilon(1e-13));
}

TEST_CASE("metrics: shard merge equals single pass") {
  Rng rng(7);
  const auto events = random_events(rng, 4000, 32);
  TokenMetricsStore single(32);
  for (const auto& e : events) single.accumulate(e.label, e.loss, e.correct);
  TokenMetricsStore merged(32);
  for (int shard = 0; shard < 4; ++shard) {
    TokenMetricsStore part(32);
    for (std::size_t i = static_cast<std::size_t>(shard); i < events.size(); i += 4) {
      part.accumulate(events[i].label, events[i].loss, events[i].correct);
    }
    merged.merge(part);
  }
  CHECK(merged.total_positions() == single.total_positions());
  CHECK(merged.average_loss() == doctest::Approx(single.average_loss()).epsilon(1e-13));
  CHECK(merged.token_balanced_loss() ==
        doctest::Approx(single.token_balanced_loss()).epsilon(1e-13));
}

TEST_CASE("metrics: average_loss basics") {
  TokenMetricsStore store(4);
  store.accumulate(1, 0.7, true);
  CHECK(store.average_loss() == doctest::Approx(0.7));
  TokenMetricsStore empty(4);
  CHECK_THROWS(empty.average_loss());
}

TEST_CASE("metrics: token_balanced_loss reweights rare tokens") {
  TokenMetricsStore store(4);
  for (int i = 0; i < 1000; ++i) store.accumulate(0, 0.1, true);
  store.accumulate(1, 2.0, false);
  CHECK(store.token_balanced_loss() == doctest::Approx(1.05).epsilon(1e-12));
  CHECK(store.average_loss() == doctest::Approx(102.0 / 1001.0).epsilon(1e-12));
}

TEST_CASE("metrics: duplicating one token's events leaves its contribution unchanged") {
  TokenMetricsStore base(4);
  base.accumulate(0, 1.0, true);
  base.accumulate(1, 3.0, false);
  TokenMetricsStore doubled(4);
  doubled.accumulate(0, 1.0, true);
  doubled.accumulate(1, 3.0, false);
  doubled.accumulate(1, 3.0, false);
  CHECK(base.token_balanced_loss() == doctest::Approx(doubled.token_balanced_loss()));
}

TEST_CASE("metrics: perplexity is the exponential of the balanced loss") {
  TokenMetricsStore store(4);
  store.accumulate(2, 0.0, true);
  CHECK(store.per_token_perplexity() == doctest::Approx(1.0));
  store.accumulate(1, 0.9, false);
  CHECK(store.per_token_perplexity() == std::exp(store.token_balanced_loss()));
}

TEST_CASE("metrics: reported reference pairs fall in their intervals") {
  CHECK(std::exp(0.066) > 1.066);
  CHECK(std::exp(0.066) < 1.072);
  CHECK(std::exp(0.163) > 1.174);
  CHECK(std::exp(0.163) < 1.180);
}

TEST_CASE("metrics: per_token_accuracy") {
  TokenMetricsStore store(4);
  store.accumulate(0, 0.1, true);
  store.accumulate(0, 0.1, true);
  store.accumulate(1, 0.1, true);
  CHECK(store.per_token_accuracy() == doctest::Approx(1.0));
  store.accumulate(1, 0.5, false);
  CHECK(store.per_token_accuracy() == doctest::Approx(0.75));  // (1 + 0.5)/2
}

TEST_CASE("metrics: learning_speed constant trajectory is zero") {
  TokenTrajectory t{0, {{100, 1.5}, {200, 1.5}, {300, 1.5}}};
  CHECK(learning_speed(t) == 0.0);
}

TEST_CASE("metrics: learning_speed linear descent is one half") {
  TokenTrajectory t{0, {{100, 2.0}, {200, 1.0}, {300, 0.0}}};
  CHECK(learning_speed(t) == doctest::Approx(0.5).epsilon(1e-13));
}

TEST_CASE("metrics: learning_speed early drop hand oracle") {
  TokenTrajectory t{0, {{1, 1.0}, {2, 0.0}, {3, 0.0}, {4, 0.0}}};
  CHECK(learning_speed(t) == doctest::Approx(1.0 - 0.5 / 3.0).epsilon(1e-13));
}

TEST_CASE("metrics: learning_speed requires two checkpoints") {
  TokenTrajectory t{0, {{100, 1.0}}};
  CHECK_THROWS_AS(learning_speed(t), std::invalid_argument);
}

TEST_CASE("metrics: learning_speed stays in [0,1] and is affine invariant") {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    TokenTrajectory t;
    t.token = 0;
    const int n = 2 + static_cast<int>(rng.below(20));
    for (int i = 0; i < n; ++i) {
      t.checkpoints.push_back({i * 100, rng.uniform(0.0, 10.0)});
    }
    const double s = learning_speed(t);
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
    const double scale = rng.uniform(0.1, 7.0);
    const double offset = rng.uniform(-4.0, 4.0);
    TokenTrajectory affine = t;
    for (auto& point : affine.checkpoints) {
      point.mean_loss = scale * point.mean_loss + offset;
    }
    CHECK(std::abs(learning_speed(affine) - s) <= 1e-10);
  }
}

TEST_CASE("metrics: bin_and_summarize single occupied bin equals balanced mean") {
  // two tokens, both with count in [3,9)
  FrequencyTable table;
  table.vocab_size = 2;
  table.counts_total = {4, 5};
  table.counts_next = {4, 5};
  table.total_total = 9;
  table.total_next = 9;
  const std::vector<double> stat = {1.0, 3.0};
  const auto bins = bin_and_summarize(stat, table, FrequencyKind::NextToken);
  REQUIRE(bins.size() == 2);   // bins [1,3) and [3,9); the first empty
  CHECK(!bins[0].mean.has_value());
  REQUIRE(bins[1].mean.has_value());
  CHECK(*bins[1].mean == doctest::Approx(2.0));
}

TEST_CASE("metrics: bin_and_summarize matches group-by oracle") {
  Rng rng(21);
  const std::int32_t vocab = 200;
  FrequencyTable table;
  table.vocab_size = vocab;
  table.counts_total.resize(vocab);
  table.counts_next.resize(vocab);
  std::vector<double> stat(vocab);
  for (std::int32_t k = 0; k < vocab; ++k) {
    table.counts_next[static_cast<std::size_t>(k)] = static_cast<std::int64_t>(rng.below(700));
    table.counts_total[static_cast<std::size_t>(k)] =
        table.counts_next[static_cast<std::size_t>(k)] + 1;
    stat[static_cast<std::size_t>(k)] = rng.uniform(0.0, 2.0);
  }
  const auto summaries = bin_and_summarize(stat, table, FrequencyKind::NextToken);
  for (const auto& summary : summaries) {
    // oracle: direct filter over tokens
    std::vector<double> members;
    for (std::int32_t k = 0; k < vocab; ++k) {
      const auto c = table.counts_next[static_cast<std::size_t>(k)];
      if (c >= summary.lower && c < summary.upper) {
        members.push_back(stat[static_cast<std::size_t>(k)]);
      }
    }
    CHECK(members.size() == summary.member_count);
    if (!members.empty()) {
      double mean = 0.0;
      for (const double v : members) mean += v;
      mean /= static_cast<double>(members.size());
      CHECK(*summary.mean == doctest::Approx(mean).epsilon(1e-12));
    } else {
      CHECK(!summary.mean.has_value());
    }
  }
}
