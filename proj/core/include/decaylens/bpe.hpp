// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "decaylens/types.hpp"

namespace decaylens {

struct BpeFlags {
  bool lowercase = true;   // corpus text lowered before training and encoding
  bool byte_level = true;  // base symbols are single bytes
};

inline const std::vector<std::string> kDefaultSpecials = {"<pad>", "<s>", "</s>", "<unk>",
                                                          "<mask>"};

enum class UnknownPolicy { Error, MapToUnk };

// Byte-pair-encoding vocabulary. Immutable after training; safe to share
// across concurrent readers. Id layout: specials first, then base symbols in
// byte order, then merge outputs in selection order.
class TokenizerModel {
 public:
  TokenizerModel() = default;
  TokenizerModel(std::vector<std::string> vocab,
                 std::vector<std::pair<std::string, std::string>> merges,
                 std::vector<std::string> specials, BpeFlags flags);

  std::int32_t vocab_size() const { return static_cast<std::int32_t>(vocab_.size()); }
  const std::vector<std::string>& vocab() const { return vocab_; }
  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }
  const std::vector<std::string>& specials() const { return specials_; }
  const BpeFlags& flags() const { return flags_; }

  std::optional<TokenId> token_id(std::string_view token) const;
  const std::string& token_string(TokenId id) const;
  bool is_special(TokenId id) const;
  std::optional<TokenId> eos_id() const;  // id of "</s>" when present
  std::optional<TokenId> unk_id() const;  // id of "<unk>" when present

  struct MergeRule {
    int rank;
    TokenId output;
  };
  // (left_id << 32 | right_id) -> earliest-rank rule
  const std::unordered_map<std::uint64_t, MergeRule>& merge_ranks() const { return merge_ranks_; }

 private:
  std::vector<std::string> vocab_;
  std::vector<std::pair<std::string, std::string>> merges_;
  std::vector<std::string> specials_;
  BpeFlags flags_;
  std::unordered_map<std::string, TokenId> lookup_;
  std::unordered_map<std::uint64_t, MergeRule> merge_ranks_;
};

// Greedy pair-merge training. Deterministic: the most frequent pair wins,
// ties broken by lexicographic order of (left, right) token strings. Stops
// early when no adjacent pair occurs at least twice. Specials are reserved
// ids and never produced by merges.
TokenizerModel train_bpe(std::span<const std::string> corpus, std::int32_t target_vocab,
                         std::vector<std::string> specials = kDefaultSpecials,
                         BpeFlags flags = {});

// Applies merges in learned order. Specials occurring verbatim in the text
// are emitted atomically, never split. Base symbols absent from the
// vocabulary raise an error naming the byte, or map to <unk> under MapToUnk.
std::vector<TokenId> encode(const TokenizerModel& model, std::string_view text,
                            bool append_eos = false,
                            UnknownPolicy on_unknown = UnknownPolicy::Error);

// Concatenation of token strings; exact inverse of encode on encodable text.
std::string decode(const TokenizerModel& model, std::span<const TokenId> ids);

// Printable form of a raw token byte string (reversible byte-to-codepoint
// mapping, so arbitrary bytes survive JSON and CSV).
std::string display_token(std::string_view raw);
std::string raw_from_display(std::string_view display);

void save_tokenizer(const TokenizerModel& model, const std::filesystem::path& path);
TokenizerModel load_tokenizer(const std::filesystem::path& path);

}  // namespace decaylens
