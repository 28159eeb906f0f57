// SPDX-License-Identifier: Apache-2.0
#include "decaylens/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "decaylens/rng.hpp"

namespace decaylens {

std::vector<std::vector<TokenId>> zipf_corpus(std::int32_t vocab, std::int64_t total_tokens,
                                              double exponent, std::int64_t doc_length,
                                              std::uint64_t seed) {
  if (vocab < 1 || total_tokens < 1 || doc_length < 1) {
    throw std::invalid_argument("zipf_corpus: vocab, total_tokens, doc_length must be positive");
  }
  std::vector<double> cdf(static_cast<std::size_t>(vocab));
  double cum = 0.0;
  for (std::int32_t r = 0; r < vocab; ++r) {
    cum += 1.0 / std::pow(static_cast<double>(r + 1), exponent);
    cdf[static_cast<std::size_t>(r)] = cum;
  }
  const double norm = cum;

  Rng rng(seed);
  std::vector<std::vector<TokenId>> docs;
  docs.reserve(static_cast<std::size_t>((total_tokens + doc_length - 1) / doc_length));
  std::int64_t produced = 0;
  while (produced < total_tokens) {
    const std::int64_t len = std::min(doc_length, total_tokens - produced);
    std::vector<TokenId> doc(static_cast<std::size_t>(len));
    for (auto& id : doc) {
      const double u = rng.next_double() * norm;
      const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
      id = static_cast<TokenId>(std::min<std::ptrdiff_t>(it - cdf.begin(), vocab - 1));
    }
    produced += len;
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<std::vector<TokenId>> cyclic_corpus(std::int32_t vocab, std::int64_t total_tokens,
                                                std::int64_t doc_length) {
  if (vocab < 1 || total_tokens < 1 || doc_length < 1) {
    throw std::invalid_argument("cyclic_corpus: vocab, total_tokens, doc_length must be positive");
  }
  std::vector<std::vector<TokenId>> docs;
  std::int64_t produced = 0;
  TokenId next = 0;
  while (produced < total_tokens) {
    const std::int64_t len = std::min(doc_length, total_tokens - produced);
    std::vector<TokenId> doc(static_cast<std::size_t>(len));
    for (auto& id : doc) {
      id = next;
      next = static_cast<TokenId>((next + 1) % vocab);
    }
    produced += len;
    docs.push_back(std::move(doc));
  }
  return docs;
}

}  // namespace decaylens
