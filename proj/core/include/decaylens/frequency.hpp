// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "decaylens/types.hpp"

namespace decaylens {

// Two distinct frequency notions. Total counts every position of a token;
// NextToken counts only positions that serve as a prediction target
// (positions 2..n of each sequence). Callers always pick one explicitly.
enum class FrequencyKind { Total, NextToken };

struct FrequencyTable {
  std::int32_t vocab_size = 0;
  std::vector<std::int64_t> counts_total;
  std::vector<std::int64_t> counts_next;
  std::int64_t total_total = 0;
  std::int64_t total_next = 0;

  const std::vector<std::int64_t>& counts(FrequencyKind kind) const {
    return kind == FrequencyKind::Total ? counts_total : counts_next;
  }
  std::int64_t total(FrequencyKind kind) const {
    return kind == FrequencyKind::Total ? total_total : total_next;
  }
};

// Tokens with count in [lower, upper) = [3^(index-1), 3^index). Zero-count
// tokens belong to no bin.
struct FrequencyBin {
  int index = 0;
  std::int64_t lower = 0;
  std::int64_t upper = 0;
  std::vector<TokenId> members;
  double token_fraction = 0.0;  // |members| / observed tokens
};

FrequencyTable count_frequencies(std::span<const std::vector<TokenId>> corpus_ids,
                                 std::int32_t vocab_size);

// Associative merge of tables built over disjoint document shards.
FrequencyTable merge_tables(const FrequencyTable& a, const FrequencyTable& b);

// Fraction of all occurrences captured by the ceil(top_fraction * V) most
// frequent tokens. Throws if the table has zero total.
double cumulative_coverage(const FrequencyTable& table, FrequencyKind kind, double top_fraction);

enum class PercentileRule {
  // Threshold = count of the token at which cumulative occurrence mass,
  // walked over tokens in ascending count order, first reaches p% of total.
  DataMass,
  // Threshold = count at the p-th percentile rank of the per-token count
  // distribution (observed tokens, ascending).
  TokenRank,
};

// The count threshold the chosen rule assigns to percentile p in (0, 100).
std::int64_t percentile_count_threshold(const FrequencyTable& table, FrequencyKind kind,
                                        double percentile,
                                        PercentileRule rule = PercentileRule::DataMass);

// Fraction of observed tokens whose count is strictly below the threshold.
double ratio_below_percentile(const FrequencyTable& table, FrequencyKind kind, double percentile,
                              PercentileRule rule = PercentileRule::DataMass);

std::vector<FrequencyBin> histogram_base3(const FrequencyTable& table, FrequencyKind kind);

std::int32_t observed_tokens(const FrequencyTable& table, FrequencyKind kind);
std::int32_t zero_count_tokens(const FrequencyTable& table, FrequencyKind kind);

// CSV columns: token_id,token_string,count_total,count_next. Token strings
// optional (empty when unavailable); written in display form by the caller.
void write_frequency_csv(const std::filesystem::path& path, const FrequencyTable& table,
                         const std::vector<std::string>* token_strings);
void write_frequency_json(const std::filesystem::path& path, const FrequencyTable& table);
FrequencyTable load_frequency_json(const std::filesystem::path& path);

}  // namespace decaylens
