// SPDX-License-Identifier: Apache-2.0
#include "decaylens/frequency.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "decaylens/io.hpp"
#include "decaylens/parallel.hpp"

namespace decaylens {

namespace {

void validate_kind_total(const FrequencyTable& table, FrequencyKind kind) {
  if (table.vocab_size <= 0) {
    throw std::invalid_argument("frequency table is empty");
  }
  if (table.total(kind) <= 0) {
    throw std::invalid_argument("frequency table has zero total for the requested kind");
  }
}

// Token ids sorted by ascending count; ties by ascending id for determinism.
std::vector<TokenId> ascending_by_count(const std::vector<std::int64_t>& counts) {
  std::vector<TokenId> order(counts.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](TokenId a, TokenId b) { return counts[a] < counts[b]; });
  return order;
}

}  // namespace

FrequencyTable count_frequencies(std::span<const std::vector<TokenId>> corpus_ids,
                                 std::int32_t vocab_size) {
  if (vocab_size <= 0) {
    throw std::invalid_argument("count_frequencies: vocab_size must be positive");
  }
  FrequencyTable result;
  result.vocab_size = vocab_size;
  result.counts_total.assign(static_cast<std::size_t>(vocab_size), 0);
  result.counts_next.assign(static_cast<std::size_t>(vocab_size), 0);

  std::mutex merge_mutex;
  parallel_chunks(corpus_ids.size(), [&](std::size_t begin, std::size_t end) {
    std::vector<std::int64_t> local_total(static_cast<std::size_t>(vocab_size), 0);
    std::vector<std::int64_t> local_next(static_cast<std::size_t>(vocab_size), 0);
    for (std::size_t doc = begin; doc < end; ++doc) {
      const auto& ids = corpus_ids[doc];
      for (std::size_t pos = 0; pos < ids.size(); ++pos) {
        const TokenId id = ids[pos];
        if (id < 0 || id >= vocab_size) {
          throw std::out_of_range("count_frequencies: token id out of range: " +
                                  std::to_string(id));
        }
        ++local_total[static_cast<std::size_t>(id)];
        if (pos > 0) {  // first position is never a prediction target
          ++local_next[static_cast<std::size_t>(id)];
        }
      }
    }
    std::lock_guard<std::mutex> lock(merge_mutex);
    for (std::int32_t k = 0; k < vocab_size; ++k) {
      result.counts_total[static_cast<std::size_t>(k)] += local_total[static_cast<std::size_t>(k)];
      result.counts_next[static_cast<std::size_t>(k)] += local_next[static_cast<std::size_t>(k)];
    }
  });

  result.total_total = std::accumulate(result.counts_total.begin(), result.counts_total.end(),
                                       std::int64_t{0});
  result.total_next =
      std::accumulate(result.counts_next.begin(), result.counts_next.end(), std::int64_t{0});
  return result;
}

FrequencyTable merge_tables(const FrequencyTable& a, const FrequencyTable& b) {
  if (a.vocab_size != b.vocab_size) {
    throw std::invalid_argument("merge_tables: vocab size mismatch");
  }
  FrequencyTable out = a;
  for (std::int32_t k = 0; k < out.vocab_size; ++k) {
    out.counts_total[static_cast<std::size_t>(k)] += b.counts_total[static_cast<std::size_t>(k)];
    out.counts_next[static_cast<std::size_t>(k)] += b.counts_next[static_cast<std::size_t>(k)];
  }
  out.total_total += b.total_total;
  out.total_next += b.total_next;
  return out;
}

double cumulative_coverage(const FrequencyTable& table, FrequencyKind kind, double top_fraction) {
  if (!(top_fraction > 0.0) || top_fraction > 1.0) {
    throw std::invalid_argument("cumulative_coverage: top_fraction must be in (0, 1]");
  }
  validate_kind_total(table, kind);
  const auto& counts = table.counts(kind);
  auto order = ascending_by_count(counts);
  const auto take = static_cast<std::size_t>(
      std::min<double>(std::ceil(top_fraction * table.vocab_size), table.vocab_size));
  std::int64_t sum = 0;
  for (std::size_t i = 0; i < take; ++i) {
    sum += counts[order[order.size() - 1 - i]];
  }
  return static_cast<double>(sum) / static_cast<double>(table.total(kind));
}

std::int64_t percentile_count_threshold(const FrequencyTable& table, FrequencyKind kind,
                                        double percentile, PercentileRule rule) {
  if (!(percentile > 0.0) || !(percentile < 100.0)) {
    throw std::invalid_argument("percentile must be in (0, 100)");
  }
  validate_kind_total(table, kind);
  const auto& counts = table.counts(kind);
  auto order = ascending_by_count(counts);
  // Drop zero-count tokens from the walk.
  std::vector<TokenId> observed;
  observed.reserve(order.size());
  for (TokenId id : order) {
    if (counts[id] > 0) {
      observed.push_back(id);
    }
  }
  if (observed.empty()) {
    throw std::invalid_argument("percentile_count_threshold: no observed tokens");
  }
  if (rule == PercentileRule::DataMass) {
    const double target =
        percentile / 100.0 * static_cast<double>(table.total(kind));
    std::int64_t cum = 0;
    for (TokenId id : observed) {
      cum += counts[id];
      if (static_cast<double>(cum) >= target) {
        return counts[id];
      }
    }
    return counts[observed.back()];
  }
  // TokenRank: count at the percentile rank of the observed-count distribution.
  const auto rank = static_cast<std::size_t>(std::min<double>(
      observed.size() - 1,
      std::max(0.0, std::ceil(percentile / 100.0 * static_cast<double>(observed.size())) - 1.0)));
  return counts[observed[rank]];
}

double ratio_below_percentile(const FrequencyTable& table, FrequencyKind kind, double percentile,
                              PercentileRule rule) {
  const std::int64_t threshold = percentile_count_threshold(table, kind, percentile, rule);
  const auto& counts = table.counts(kind);
  std::int64_t below = 0;
  std::int64_t observed = 0;
  for (std::int64_t c : counts) {
    if (c > 0) {
      ++observed;
      if (c < threshold) {
        ++below;
      }
    }
  }
  return static_cast<double>(below) / static_cast<double>(observed);
}

std::vector<FrequencyBin> histogram_base3(const FrequencyTable& table, FrequencyKind kind) {
  const auto& counts = table.counts(kind);
  std::vector<FrequencyBin> bins;
  const std::int32_t observed = observed_tokens(table, kind);
  for (TokenId id = 0; id < table.vocab_size; ++id) {
    const std::int64_t c = counts[static_cast<std::size_t>(id)];
    if (c <= 0) {
      continue;
    }
    // bin index i >= 1 such that 3^(i-1) <= c < 3^i
    int index = 1;
    std::int64_t upper = 3;
    while (c >= upper) {
      ++index;
      upper *= 3;
    }
    if (static_cast<std::size_t>(index) > bins.size()) {
      std::int64_t lower = 1;
      for (std::size_t i = bins.size(); i < static_cast<std::size_t>(index); ++i) {
        FrequencyBin bin;
        bin.index = static_cast<int>(i) + 1;
        bin.lower = lower;
        bin.upper = lower * 3;
        bins.push_back(bin);
        lower *= 3;
      }
    }
    bins[static_cast<std::size_t>(index - 1)].members.push_back(id);
  }
  for (auto& bin : bins) {
    bin.token_fraction =
        observed > 0 ? static_cast<double>(bin.members.size()) / observed : 0.0;
  }
  return bins;
}

std::int32_t observed_tokens(const FrequencyTable& table, FrequencyKind kind) {
  const auto& counts = table.counts(kind);
  return static_cast<std::int32_t>(
      std::count_if(counts.begin(), counts.end(), [](std::int64_t c) { return c > 0; }));
}

std::int32_t zero_count_tokens(const FrequencyTable& table, FrequencyKind kind) {
  return table.vocab_size - observed_tokens(table, kind);
}

void write_frequency_csv(const std::filesystem::path& path, const FrequencyTable& table,
                         const std::vector<std::string>* token_strings) {
  std::string out = "token_id,token_string,count_total,count_next\n";
  for (TokenId id = 0; id < table.vocab_size; ++id) {
    out += std::to_string(id);
    out += ',';
    if (token_strings != nullptr && static_cast<std::size_t>(id) < token_strings->size()) {
      out += csv_escape((*token_strings)[static_cast<std::size_t>(id)]);
    }
    out += ',';
    out += std::to_string(table.counts_total[static_cast<std::size_t>(id)]);
    out += ',';
    out += std::to_string(table.counts_next[static_cast<std::size_t>(id)]);
    out += '\n';
  }
  atomic_write_file(path, out);
}

void write_frequency_json(const std::filesystem::path& path, const FrequencyTable& table) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["vocab_size"] = table.vocab_size;
  j["counts_total"] = table.counts_total;
  j["counts_next"] = table.counts_next;
  j["total_total"] = table.total_total;
  j["total_next"] = table.total_next;
  atomic_write_file(path, j.dump());
}

FrequencyTable load_frequency_json(const std::filesystem::path& path) {
  const auto j = nlohmann::json::parse(read_file(path));
  FrequencyTable table;
  table.vocab_size = j.at("vocab_size").get<std::int32_t>();
  table.counts_total = j.at("counts_total").get<std::vector<std::int64_t>>();
  table.counts_next = j.at("counts_next").get<std::vector<std::int64_t>>();
  table.total_total = j.at("total_total").get<std::int64_t>();
  table.total_next = j.at("total_next").get<std::int64_t>();
  if (table.counts_total.size() != static_cast<std::size_t>(table.vocab_size) ||
      table.counts_next.size() != static_cast<std::size_t>(table.vocab_size)) {
    throw std::runtime_error("frequency json: counts length does not match vocab_size in " +
                             path.string());
  }
  return table;
}

}  // namespace decaylens
