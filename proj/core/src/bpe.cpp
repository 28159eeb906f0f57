// SPDX-License-Identifier: Apache-2.0
#include "decaylens/bpe.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <queue>
#include <stdexcept>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "decaylens/io.hpp"

namespace decaylens {

namespace {

std::uint64_t pair_key(TokenId a, TokenId b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

std::string lowercase_ascii(std::string_view text) {
  std::string out(text);
  for (char& c : out) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

// Reversible byte <-> codepoint table: printable latin-1 bytes map to
// themselves, the rest to codepoints 256+n, so any byte string has a
// printable UTF-8 display form.
struct ByteDisplayTable {
  std::array<int, 256> byte_to_cp{};
  std::unordered_map<int, unsigned char> cp_to_byte;

  ByteDisplayTable() {
    auto printable = [](int b) {
      return (b >= 0x21 && b <= 0x7E) || (b >= 0xA1 && b <= 0xAC) || (b >= 0xAE && b <= 0xFF);
    };
    int next = 0;
    for (int b = 0; b < 256; ++b) {
      const int cp = printable(b) ? b : 256 + next++;
      byte_to_cp[static_cast<std::size_t>(b)] = cp;
      cp_to_byte[cp] = static_cast<unsigned char>(b);
    }
  }
};

const ByteDisplayTable& display_table() {
  static const ByteDisplayTable table;
  return table;
}

void append_utf8(std::string& out, int cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

}  // namespace

std::string display_token(std::string_view raw) {
  const auto& table = display_table();
  std::string out;
  out.reserve(raw.size());
  for (unsigned char b : raw) {
    append_utf8(out, table.byte_to_cp[b]);
  }
  return out;
}

std::string raw_from_display(std::string_view display) {
  const auto& table = display_table();
  std::string out;
  out.reserve(display.size());
  std::size_t i = 0;
  while (i < display.size()) {
    const auto b0 = static_cast<unsigned char>(display[i]);
    int cp = 0;
    std::size_t len = 0;
    if (b0 < 0x80) {
      cp = b0;
      len = 1;
    } else if ((b0 & 0xE0) == 0xC0 && i + 1 < display.size()) {
      cp = ((b0 & 0x1F) << 6) | (static_cast<unsigned char>(display[i + 1]) & 0x3F);
      len = 2;
    } else if ((b0 & 0xF0) == 0xE0 && i + 2 < display.size()) {
      cp = ((b0 & 0x0F) << 12) | ((static_cast<unsigned char>(display[i + 1]) & 0x3F) << 6) |
           (static_cast<unsigned char>(display[i + 2]) & 0x3F);
      len = 3;
    } else {
      throw std::invalid_argument("raw_from_display: malformed UTF-8");
    }
    const auto it = table.cp_to_byte.find(cp);
    if (it == table.cp_to_byte.end()) {
      throw std::invalid_argument("raw_from_display: codepoint outside byte table");
    }
    out.push_back(static_cast<char>(it->second));
    i += len;
  }
  return out;
}

TokenizerModel::TokenizerModel(std::vector<std::string> vocab,
                               std::vector<std::pair<std::string, std::string>> merges,
                               std::vector<std::string> specials, BpeFlags flags)
    : vocab_(std::move(vocab)),
      merges_(std::move(merges)),
      specials_(std::move(specials)),
      flags_(flags) {
  lookup_.reserve(vocab_.size());
  for (std::size_t id = 0; id < vocab_.size(); ++id) {
    const auto [it, inserted] = lookup_.emplace(vocab_[id], static_cast<TokenId>(id));
    if (!inserted) {
      throw std::invalid_argument("TokenizerModel: duplicate vocab entry: " +
                                  display_token(vocab_[id]));
    }
  }
  for (const auto& special : specials_) {
    if (!lookup_.contains(special)) {
      throw std::invalid_argument("TokenizerModel: special not in vocab: " + special);
    }
  }
  merge_ranks_.reserve(merges_.size());
  int rank = 0;
  for (const auto& [left, right] : merges_) {
    if (!lookup_.contains(left) || !lookup_.contains(right) || !lookup_.contains(left + right)) {
      throw std::invalid_argument("TokenizerModel: merge references unknown token");
    }
    merge_ranks_.emplace(pair_key(lookup_.at(left), lookup_.at(right)),
                         MergeRule{rank, lookup_.at(left + right)});
    ++rank;
  }
}

std::optional<TokenId> TokenizerModel::token_id(std::string_view token) const {
  const auto it = lookup_.find(std::string(token));
  return it == lookup_.end() ? std::nullopt : std::optional<TokenId>(it->second);
}

const std::string& TokenizerModel::token_string(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size()) {
    throw std::out_of_range("token_string: id out of range: " + std::to_string(id));
  }
  return vocab_[static_cast<std::size_t>(id)];
}

bool TokenizerModel::is_special(TokenId id) const {
  const auto& s = token_string(id);
  return std::find(specials_.begin(), specials_.end(), s) != specials_.end();
}

std::optional<TokenId> TokenizerModel::eos_id() const { return token_id("</s>"); }
std::optional<TokenId> TokenizerModel::unk_id() const { return token_id("<unk>"); }

TokenizerModel train_bpe(std::span<const std::string> corpus, std::int32_t target_vocab,
                         std::vector<std::string> specials, BpeFlags flags) {
  if (!flags.byte_level) {
    throw std::invalid_argument("train_bpe: only byte-level base symbols are supported");
  }
  if (corpus.empty()) {
    throw std::invalid_argument("train_bpe: empty corpus");
  }
  {
    const auto uniq = std::unordered_set<std::string>(specials.begin(), specials.end());
    if (uniq.size() != specials.size()) {
      throw std::invalid_argument("train_bpe: duplicate specials");
    }
  }

  // Base alphabet: distinct bytes seen in the (possibly lowercased) corpus.
  std::array<bool, 256> seen{};
  std::vector<std::string> docs;
  docs.reserve(corpus.size());
  std::size_t total_bytes = 0;
  for (const auto& doc : corpus) {
    docs.push_back(flags.lowercase ? lowercase_ascii(doc) : doc);
    for (unsigned char b : docs.back()) {
      seen[b] = true;
    }
    total_bytes += docs.back().size();
  }
  if (total_bytes == 0) {
    throw std::invalid_argument("train_bpe: empty corpus");
  }

  std::vector<std::string> vocab = specials;
  std::array<TokenId, 256> base_id;
  base_id.fill(-1);
  for (int b = 0; b < 256; ++b) {
    if (seen[static_cast<std::size_t>(b)]) {
      base_id[static_cast<std::size_t>(b)] = static_cast<TokenId>(vocab.size());
      vocab.emplace_back(1, static_cast<char>(b));
    }
  }
  if (static_cast<std::int32_t>(vocab.size()) > target_vocab) {
    throw std::invalid_argument(
        "train_bpe: target_vocab smaller than base alphabet plus specials (need >= " +
        std::to_string(vocab.size()) + ")");
  }
  const std::unordered_set<std::string> special_set(specials.begin(), specials.end());

  // Symbol stream over all documents, -1 separators; doubly linked so merges
  // are O(occurrences).
  std::vector<TokenId> sym;
  sym.reserve(total_bytes + docs.size());
  for (const auto& doc : docs) {
    for (unsigned char b : doc) {
      sym.push_back(base_id[b]);
    }
    sym.push_back(-1);
  }
  const auto n = static_cast<std::int64_t>(sym.size());
  std::vector<std::int32_t> nxt(sym.size());
  std::vector<std::int32_t> prv(sym.size());
  for (std::int64_t i = 0; i < n; ++i) {
    nxt[static_cast<std::size_t>(i)] = (i + 1 < n) ? static_cast<std::int32_t>(i + 1) : -1;
    prv[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(i - 1);
  }

  std::unordered_map<std::uint64_t, std::int64_t> counts;
  std::unordered_map<std::uint64_t, std::vector<std::int32_t>> positions;
  for (std::int64_t i = 0; i + 1 < n; ++i) {
    const TokenId a = sym[static_cast<std::size_t>(i)];
    const TokenId b = sym[static_cast<std::size_t>(i + 1)];
    if (a < 0 || b < 0) {
      continue;
    }
    const std::uint64_t key = pair_key(a, b);
    ++counts[key];
    positions[key].push_back(static_cast<std::int32_t>(i));
  }

  struct HeapEntry {
    std::int64_t count;
    TokenId left;
    TokenId right;
  };
  auto heap_less = [&vocab](const HeapEntry& x, const HeapEntry& y) {
    if (x.count != y.count) {
      return x.count < y.count;
    }
    // equal counts: lexicographically smaller (left, right) wins
    if (vocab[static_cast<std::size_t>(x.left)] != vocab[static_cast<std::size_t>(y.left)]) {
      return vocab[static_cast<std::size_t>(x.left)] > vocab[static_cast<std::size_t>(y.left)];
    }
    return vocab[static_cast<std::size_t>(x.right)] > vocab[static_cast<std::size_t>(y.right)];
  };
  std::priority_queue<HeapEntry, std::vector<HeapEntry>, decltype(heap_less)> heap(heap_less);
  for (const auto& [key, count] : counts) {
    if (count >= 2) {
      heap.push({count, static_cast<TokenId>(key >> 32),
                 static_cast<TokenId>(key & 0xFFFFFFFFu)});
    }
  }

  std::vector<std::pair<std::string, std::string>> merges;
  const auto merge_budget =
      static_cast<std::size_t>(target_vocab) - vocab.size();  // vocab.size() <= target checked
  while (merges.size() < merge_budget && !heap.empty()) {
    const HeapEntry top = heap.top();
    heap.pop();
    const std::uint64_t key = pair_key(top.left, top.right);
    const auto it = counts.find(key);
    const std::int64_t current = (it == counts.end()) ? 0 : it->second;
    if (current != top.count) {
      if (current >= 2) {
        heap.push({current, top.left, top.right});  // stale entry, refresh
      }
      continue;
    }
    if (current < 2) {
      continue;
    }
    const std::string merged = vocab[static_cast<std::size_t>(top.left)] +
                               vocab[static_cast<std::size_t>(top.right)];
    if (special_set.contains(merged)) {
      counts.erase(key);  // merges never produce a special
      positions.erase(key);
      continue;
    }
    const auto new_id = static_cast<TokenId>(vocab.size());
    vocab.push_back(merged);
    merges.emplace_back(vocab[static_cast<std::size_t>(top.left)],
                        vocab[static_cast<std::size_t>(top.right)]);

    auto occ = std::move(positions[key]);
    positions.erase(key);
    std::sort(occ.begin(), occ.end());
    std::unordered_set<std::uint64_t> touched;
    for (const std::int32_t p : occ) {
      if (sym[static_cast<std::size_t>(p)] != top.left) {
        continue;  // consumed by an earlier (possibly overlapping) merge
      }
      const std::int32_t q = nxt[static_cast<std::size_t>(p)];
      if (q < 0 || sym[static_cast<std::size_t>(q)] != top.right) {
        continue;
      }
      const std::int32_t l = prv[static_cast<std::size_t>(p)];
      const std::int32_t r = nxt[static_cast<std::size_t>(q)];
      if (l >= 0 && sym[static_cast<std::size_t>(l)] >= 0) {
        const TokenId ls = sym[static_cast<std::size_t>(l)];
        --counts[pair_key(ls, top.left)];
        const std::uint64_t nk = pair_key(ls, new_id);
        ++counts[nk];
        positions[nk].push_back(l);
        touched.insert(nk);
      }
      if (r >= 0 && sym[static_cast<std::size_t>(r)] >= 0) {
        const TokenId rs = sym[static_cast<std::size_t>(r)];
        --counts[pair_key(top.right, rs)];
        const std::uint64_t nk = pair_key(new_id, rs);
        ++counts[nk];
        positions[nk].push_back(p);
        touched.insert(nk);
      }
      --counts[key];
      sym[static_cast<std::size_t>(p)] = new_id;
      sym[static_cast<std::size_t>(q)] = -2;  // dead
      nxt[static_cast<std::size_t>(p)] = r;
      if (r >= 0) {
        prv[static_cast<std::size_t>(r)] = p;
      }
    }
    counts.erase(key);
    for (const std::uint64_t nk : touched) {
      const auto cit = counts.find(nk);
      if (cit != counts.end() && cit->second >= 2) {
        heap.push({cit->second, static_cast<TokenId>(nk >> 32),
                   static_cast<TokenId>(nk & 0xFFFFFFFFu)});
      }
    }
  }

  return TokenizerModel(std::move(vocab), std::move(merges), std::move(specials), flags);
}

namespace {

void encode_segment(const TokenizerModel& model, std::string_view segment,
                    UnknownPolicy on_unknown, std::vector<TokenId>& out) {
  const auto& ranks = model.merge_ranks();
  std::vector<TokenId> ids;
  ids.reserve(segment.size());
  for (unsigned char b : segment) {
    const auto id = model.token_id(std::string_view(reinterpret_cast<const char*>(&b), 1));
    if (id.has_value()) {
      ids.push_back(*id);
    } else if (on_unknown == UnknownPolicy::MapToUnk && model.unk_id().has_value()) {
      ids.push_back(*model.unk_id());
    } else {
      char hex[8];
      std::snprintf(hex, sizeof(hex), "0x%02X", b);
      throw std::invalid_argument(std::string("encode: unknown base symbol ") + hex);
    }
  }
  // Repeatedly apply the lowest-rank pair present, all occurrences at once.
  while (ids.size() >= 2) {
    int best_rank = -1;
    for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
      const auto it = ranks.find(pair_key(ids[i], ids[i + 1]));
      if (it != ranks.end() && (best_rank < 0 || it->second.rank < best_rank)) {
        best_rank = it->second.rank;
      }
    }
    if (best_rank < 0) {
      break;
    }
    std::vector<TokenId> next_ids;
    next_ids.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size();) {
      if (i + 1 < ids.size()) {
        const auto it = ranks.find(pair_key(ids[i], ids[i + 1]));
        if (it != ranks.end() && it->second.rank == best_rank) {
          next_ids.push_back(it->second.output);
          i += 2;
          continue;
        }
      }
      next_ids.push_back(ids[i]);
      ++i;
    }
    ids = std::move(next_ids);
  }
  out.insert(out.end(), ids.begin(), ids.end());
}

}  // namespace

std::vector<TokenId> encode(const TokenizerModel& model, std::string_view text, bool append_eos,
                            UnknownPolicy on_unknown) {
  const std::string processed =
      model.flags().lowercase ? lowercase_ascii(text) : std::string(text);

  std::vector<TokenId> out;
  std::size_t cursor = 0;
  while (cursor < processed.size()) {
    // leftmost special occurrence; longest special wins at equal offset
    std::size_t best_pos = std::string::npos;
    std::size_t best_len = 0;
    TokenId best_id = -1;
    for (const auto& special : model.specials()) {
      const std::size_t pos = processed.find(special, cursor);
      if (pos == std::string::npos) {
        continue;
      }
      if (pos < best_pos || (pos == best_pos && special.size() > best_len)) {
        best_pos = pos;
        best_len = special.size();
        best_id = *model.token_id(special);
      }
    }
    if (best_pos == std::string::npos) {
      encode_segment(model, std::string_view(processed).substr(cursor), on_unknown, out);
      break;
    }
    if (best_pos > cursor) {
      encode_segment(model, std::string_view(processed).substr(cursor, best_pos - cursor),
                     on_unknown, out);
    }
    out.push_back(best_id);
    cursor = best_pos + best_len;
  }
  if (append_eos) {
    const auto eos = model.eos_id();
    if (!eos.has_value()) {
      throw std::logic_error("encode: append_eos requested but model has no </s> special");
    }
    out.push_back(*eos);
  }
  return out;
}

std::string decode(const TokenizerModel& model, std::span<const TokenId> ids) {
  std::string out;
  for (const TokenId id : ids) {
    out += model.token_string(id);  // throws on out-of-range id
  }
  return out;
}

void save_tokenizer(const TokenizerModel& model, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  nlohmann::ordered_json specials = nlohmann::json::array();
  for (const auto& s : model.specials()) {
    specials.push_back(display_token(s));
  }
  j["specials"] = std::move(specials);
  nlohmann::ordered_json vocab = nlohmann::json::array();
  for (const auto& token : model.vocab()) {
    vocab.push_back(display_token(token));
  }
  j["vocab"] = std::move(vocab);
  nlohmann::ordered_json merges = nlohmann::json::array();
  for (const auto& [left, right] : model.merges()) {
    merges.push_back(nlohmann::ordered_json::array({display_token(left), display_token(right)}));
  }
  j["merges"] = std::move(merges);
  j["flags"] = {{"lowercase", model.flags().lowercase}, {"byte_level", model.flags().byte_level}};
  atomic_write_file(path, j.dump());
}

TokenizerModel load_tokenizer(const std::filesystem::path& path) {
  const auto j = nlohmann::json::parse(read_file(path));
  std::vector<std::string> vocab;
  for (const auto& entry : j.at("vocab")) {
    vocab.push_back(raw_from_display(entry.get<std::string>()));
  }
  std::vector<std::string> specials;
  for (const auto& entry : j.at("specials")) {
    specials.push_back(raw_from_display(entry.get<std::string>()));
  }
  std::vector<std::pair<std::string, std::string>> merges;
  for (const auto& entry : j.at("merges")) {
    merges.emplace_back(raw_from_display(entry.at(0).get<std::string>()),
                        raw_from_display(entry.at(1).get<std::string>()));
  }
  BpeFlags flags;
  flags.lowercase = j.at("flags").at("lowercase").get<bool>();
  flags.byte_level = j.at("flags").at("byte_level").get<bool>();
  return TokenizerModel(std::move(vocab), std::move(merges), std::move(specials), flags);
}

}  // namespace decaylens
