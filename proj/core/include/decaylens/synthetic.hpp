// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "decaylens/types.hpp"

namespace decaylens {

// I.i.d. draws from a Zipf(exponent) marginal over ids [0, vocab), split
// into documents of doc_length tokens. Heavy-tailed by construction: rank-r
// probability proportional to 1/r^exponent.
std::vector<std::vector<TokenId>> zipf_corpus(std::int32_t vocab, std::int64_t total_tokens,
                                              double exponent, std::int64_t doc_length,
                                              std::uint64_t seed);

// Deterministic cyclic successor language over `vocab` symbols
// (0,1,...,vocab-1,0,1,...): every next token is fully predictable from the
// previous one.
std::vector<std::vector<TokenId>> cyclic_corpus(std::int32_t vocab, std::int64_t total_tokens,
                                                std::int64_t doc_length);

}  // namespace decaylens
