// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>

#include "decaylens/frequency.hpp"
#include "decaylens/rng.hpp"
#include "decaylens/synthetic.hpp"

using namespace decaylens;

TEST_CASE("frequency: counts every position, targets skip the first") {
  const std::vector<std::vector<TokenId>> corpus = {{5, 5, 7}};
  const auto table = count_frequencies(corpus, 8);
  CHECK(table.counts_total[5] == 2);
  CHECK(table.counts_total[7] == 1);
  CHECK(table.counts_next[5] == 1);
  CHECK(table.counts_next[7] == 1);
  CHECK(table.total_total == 3);
  CHECK(table.total_next == 2);
}

TEST_CASE("frequency: empty corpus yields an all-zero table") {
  const std::vector<std::vector<TokenId>> corpus;
  const auto table = count_frequencies(corpus, 4);
  CHECK(table.total_total == 0);
  CHECK(table.total_next == 0);
}

TEST_CASE("frequency: out-of-range ids rejected") {
  const std::vector<std::vector<TokenId>> corpus = {{0, 9}};
  CHECK_THROWS_AS(count_frequencies(corpus, 4), std::out_of_range);
}

TEST_CASE("frequency: next-token totals equal the number of targets") {
  Rng rng(17);
  std::vector<std::vector<TokenId>> corpus;
  std::int64_t targets = 0;
  for (int d = 0; d < 40; ++d) {
    const std::size_t len = rng.below(30);
    std::vector<TokenId> doc(len);
    for (auto& id : doc) id = static_cast<TokenId>(rng.below(16));
    if (len >= 2) targets += static_cast<std::int64_t>(len) - 1;
    corpus.push_back(std::move(doc));
  }
  const auto table = count_frequencies(corpus, 16);
  CHECK(table.total_next == targets);
  for (TokenId k = 0; k < 16; ++k) {
    CHECK(table.counts_next[static_cast<std::size_t>(k)] <=
          table.counts_total[static_cast<std::size_t>(k)]);
  }
}

TEST_CASE("frequency: coverage worked example, 80% from the top 1%") {
  // 100-token vocabulary; one token holds 800 of 1000 occurrences
  FrequencyTable table;
  table.vocab_size = 100;
  table.counts_total.assign(100, 0);
  table.counts_next.assign(100, 0);
  table.counts_total[0] = 800;
  for (std::size_t k = 1; k < 51; ++k) table.counts_total[k] = 4;  // 200 spread out
  table.total_total = 1000;
  CHECK(cumulative_coverage(table, FrequencyKind::Total, 0.01) == doctest::Approx(0.80));
}

TEST_CASE("frequency: coverage is 1.0 when a single token holds all mass") {
  FrequencyTable table;
  table.vocab_size = 10;
  table.counts_total.assign(10, 0);
  table.counts_next.assign(10, 0);
  table.counts_total[3] = 42;
  table.total_total = 42;
  CHECK(cumulative_coverage(table, FrequencyKind::Total, 0.1) == doctest::Approx(1.0));
}

TEST_CASE("frequency: coverage matches the brute-force sort oracle on a Zipf sample") {
  const auto corpus = zipf_corpus(10000, 1000000, 1.0, 512, 42);
  const auto table = count_frequencies(corpus, 10000);
  for (const double fraction : {0.0005, 0.001, 0.01, 0.1, 0.5}) {
    auto counts = table.counts_total;
    std::sort(counts.begin(), counts.end(), std::greater<>());
    const auto take = static_cast<std::size_t>(std::ceil(fraction * 10000));
    const double expected =
        static_cast<double>(std::accumulate(counts.begin(), counts.begin() + take, 0LL)) /
        static_cast<double>(table.total_total);
    CHECK(cumulative_coverage(table, FrequencyKind::Total, fraction) ==
          doctest::Approx(expected).epsilon(1e-12));
  }
  // Zipf sanity: far above uniform coverage at the top 1%
  CHECK(cumulative_coverage(table, FrequencyKind::Total, 0.01) > 0.01 + 0.1);
}

TEST_CASE("frequency: coverage monotone in the fraction, exactly 1 at full") {
  const auto corpus = zipf_corpus(500, 20000, 1.0, 256, 9);
  const auto table = count_frequencies(corpus, 500);
  double prev = 0.0;
  for (double f = 0.01; f <= 1.0; f += 0.05) {
    const double c = cumulative_coverage(table, FrequencyKind::Total, f);
    CHECK(c >= prev);
    prev = c;
  }
  CHECK(cumulative_coverage(table, FrequencyKind::Total, 1.0) == doctest::Approx(1.0));
}

TEST_CASE("frequency: ratio below percentile, uniform counts give zero") {
  FrequencyTable table;
  table.vocab_size = 6;
  table.counts_total.assign(6, 10);
  table.counts_next.assign(6, 10);
  table.total_total = 60;
  table.total_next = 60;
  CHECK(ratio_below_percentile(table, FrequencyKind::Total, 50.0) == doctest::Approx(0.0));
  CHECK(ratio_below_percentile(table, FrequencyKind::Total, 95.0) == doctest::Approx(0.0));
}

TEST_CASE("frequency: ratio below percentile, two-token hand case") {
  FrequencyTable table;
  table.vocab_size = 2;
  table.counts_total = {99, 1};
  table.counts_next = {99, 1};
  table.total_total = 100;
  table.total_next = 100;
  CHECK(percentile_count_threshold(table, FrequencyKind::Total, 50.0) == 99);
  CHECK(ratio_below_percentile(table, FrequencyKind::Total, 50.0) == doctest::Approx(0.5));
}

TEST_CASE("frequency: data-mass percentile rule matches brute-force oracle") {
  Rng rng(31);
  FrequencyTable table;
  table.vocab_size = 300;
  table.counts_total.assign(300, 0);
  table.counts_next.assign(300, 0);
  for (auto& c : table.counts_total) c = static_cast<std::int64_t>(rng.below(1000));
  table.total_total = std::accumulate(table.counts_total.begin(), table.counts_total.end(), 0LL);
  for (const double p : {25.0, 50.0, 90.0, 95.0, 99.0}) {
    // oracle: ascending walk
    std::vector<std::int64_t> observed;
    for (const auto c : table.counts_total) {
      if (c > 0) observed.push_back(c);
    }
    std::sort(observed.begin(), observed.end());
    std::int64_t cum = 0;
    std::int64_t threshold = observed.back();
    for (const auto c : observed) {
      cum += c;
      if (static_cast<double>(cum) >= p / 100.0 * static_cast<double>(table.total_total)) {
        threshold = c;
        break;
      }
    }
    CHECK(percentile_count_threshold(table, FrequencyKind::Total, p) == threshold);
    const double below =
        static_cast<double>(std::count_if(observed.begin(), observed.end(),
                                          [&](std::int64_t c) { return c < threshold; })) /
        static_cast<double>(observed.size());
    CHECK(ratio_below_percentile(table, FrequencyKind::Total, p) == doctest::Approx(below));
  }
}

TEST_CASE("frequency: token-rank percentile rule is available behind the flag") {
  FrequencyTable table;
  table.vocab_size = 2;
  table.counts_total = {99, 1};
  table.counts_next = {99, 1};
  table.total_total = 100;
  table.total_next = 100;
  CHECK(percentile_count_threshold(table, FrequencyKind::Total, 50.0, PercentileRule::TokenRank) ==
        1);
}

TEST_CASE("frequency: base-3 histogram boundary rule") {
  FrequencyTable table;
  table.vocab_size = 3;
  table.counts_total = {1, 2, 3};
  table.counts_next = {1, 2, 3};
  table.total_total = 6;
  table.total_next = 6;
  const auto bins = histogram_base3(table, FrequencyKind::Total);
  REQUIRE(bins.size() == 2);
  CHECK(bins[0].lower == 1);
  CHECK(bins[0].upper == 3);
  CHECK(bins[0].members == std::vector<TokenId>{0, 1});
  CHECK(bins[1].members == std::vector<TokenId>{2});
}

TEST_CASE("frequency: histogram matches direct filtering oracle and partitions") {
  Rng rng(13);
  FrequencyTable table;
  table.vocab_size = 400;
  table.counts_total.assign(400, 0);
  table.counts_next.assign(400, 0);
  for (auto& c : table.counts_total) c = static_cast<std::int64_t>(rng.below(20000));
  table.total_total = std::accumulate(table.counts_total.begin(), table.counts_total.end(), 0LL);
  const auto bins = histogram_base3(table, FrequencyKind::Total);
  std::size_t binned = 0;
  for (const auto& bin : bins) {
    for (const TokenId id : bin.members) {
      const auto c = table.counts_total[static_cast<std::size_t>(id)];
      CHECK(c >= bin.lower);
      CHECK(c < bin.upper);
    }
    binned += bin.members.size();
  }
  const auto observed = static_cast<std::size_t>(observed_tokens(table, FrequencyKind::Total));
  CHECK(binned == observed);  // every observed token in exactly one bin
  CHECK(zero_count_tokens(table, FrequencyKind::Total) ==
        table.vocab_size - static_cast<std::int32_t>(observed));
}

TEST_CASE("frequency: merge_tables adds counts") {
  const std::vector<std::vector<TokenId>> a = {{0, 1, 1}};
  const std::vector<std::vector<TokenId>> b = {{1, 2}};
  const auto merged = merge_tables(count_frequencies(a, 3), count_frequencies(b, 3));
  const std::vector<std::vector<TokenId>> both = {{0, 1, 1}, {1, 2}};
  const auto direct = count_frequencies(both, 3);
  CHECK(merged.counts_total == direct.counts_total);
  CHECK(merged.counts_next == direct.counts_next);
  CHECK(merged.total_total == direct.total_total);
}

TEST_CASE("frequency: json round trip") {
  const auto corpus = zipf_corpus(64, 2000, 1.0, 100, 4);
  const auto table = count_frequencies(corpus, 64);
  const auto path = std::filesystem::temp_directory_path() / "decaylens_freq_test.json";
  write_frequency_json(path, table);
  const auto loaded = load_frequency_json(path);
  CHECK(loaded.counts_total == table.counts_total);
  CHECK(loaded.counts_next == table.counts_next);
  CHECK(loaded.total_next == table.total_next);
  std::filesystem::remove(path);
}

TEST_CASE("frequency: errors on empty tables") {
  FrequencyTable table;
  table.vocab_size = 4;
  table.counts_total.assign(4, 0);
  table.counts_next.assign(4, 0);
  CHECK_THROWS(cumulative_coverage(table, FrequencyKind::Total, 0.5));
  CHECK_THROWS(ratio_below_percentile(table, FrequencyKind::Total, 95.0));
}
