// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <string>
#include <vector>

#include "decaylens/bpe.hpp"
#include "decaylens/rng.hpp"

using namespace decaylens;

namespace {

std::string random_ascii(Rng& rng, std::size_t max_len) {
  const std::size_t len = rng.below(max_len + 1);
  std::string s;
  for (std::size_t i = 0; i < len; ++i) {
    s.push_back(static_cast<char>(0x20 + rng.below(0x5F)));  // printable ASCII
  }
  return s;
}

}  // namespace

TEST_CASE("bpe: most frequent pair merges first, overlaps counted") {
  const std::vector<std::string> corpus = {"aaab"};
  const auto model = train_bpe(corpus, 64);
  REQUIRE(!model.merges().empty());
  CHECK(model.merges()[0] == std::pair<std::string, std::string>("a", "a"));
}

TEST_CASE("bpe: single-merge budget picks ab") {
  const std::vector<std::string> corpus = {"abab", "ab"};
  // base symbols: a, b -> 2; default specials -> 5; one merge slot
  const auto model = train_bpe(corpus, 2 + 5 + 1);
  REQUIRE(model.merges().size() == 1);
  CHECK(model.merges()[0] == std::pair<std::string, std::string>("a", "b"));
  CHECK(model.vocab_size() == 8);
}

TEST_CASE("bpe: empty corpus and undersized vocab are rejected") {
  CHECK_THROWS_AS(train_bpe(std::vector<std::string>{}, 100), std::invalid_argument);
  CHECK_THROWS_AS(train_bpe(std::vector<std::string>{""}, 100), std::invalid_argument);
  const std::vector<std::string> corpus = {"abcdef"};
  CHECK_THROWS_AS(train_bpe(corpus, 3), std::invalid_argument);
}

TEST_CASE("bpe: deterministic merge list with lexicographic tie-break") {
  const std::vector<std::string> corpus = {"xyxyqrqr"};
  const auto a = train_bpe(corpus, 40);
  const auto b = train_bpe(corpus, 40);
  CHECK(a.merges() == b.merges());
  CHECK(a.vocab() == b.vocab());
  // "qr" and "xy" both occur twice; lexicographically smaller pair first
  REQUIRE(a.merges().size() >= 2);
  CHECK(a.merges()[0] == std::pair<std::string, std::string>("q", "r"));
  CHECK(a.merges()[1] == std::pair<std::string, std::string>("x", "y"));
}

TEST_CASE("bpe: encode empty text") {
  const std::vector<std::string> corpus = {"abab"};
  const auto model = train_bpe(corpus, 16);
  CHECK(encode(model, "").empty());
}

TEST_CASE("bpe: encode applies learned merges") {
  const std::vector<std::string> corpus = {"abab", "ab"};
  const auto model = train_bpe(corpus, 2 + 5 + 1);
  const auto ab = model.token_id("ab");
  REQUIRE(ab.has_value());
  const auto ids = encode(model, "abab");
  CHECK(ids == std::vector<TokenId>{*ab, *ab});
}

TEST_CASE("bpe: decode basics") {
  std::vector<std::string> vocab = {"</s>", "t", "h", "e", "th", "the"};
  std::vector<std::pair<std::string, std::string>> merges = {{"t", "h"}, {"th", "e"}};
  const TokenizerModel model(vocab, merges, {"</s>"}, BpeFlags{});
  CHECK(decode(model, std::vector<TokenId>{}) == "");
  CHECK(decode(model, std::vector<TokenId>{5}) == "the");
  CHECK_THROWS_AS(decode(model, std::vector<TokenId>{9}), std::out_of_range);
}

TEST_CASE("bpe: round trip on a sentence") {
  const std::vector<std::string> corpus = {"i watched this film", "i watched another film"};
  const auto model = train_bpe(corpus, 60);
  const auto ids = encode(model, "i watched this film");
  CHECK(decode(model, ids) == "i watched this film");
}

TEST_CASE("bpe: round trip property over random ASCII strings") {
  Rng rng(2024);
  std::vector<std::string> corpus;
  for (int i = 0; i < 50; ++i) corpus.push_back(random_ascii(rng, 120));
  corpus.push_back("covering all printable ascii just in case: "
                   "!\"#$%&'()*+,-./0123456789:;<=>?@abcdefghijklmnopqrstuvwxyz[\\]^_`{|}~");
  const auto model = train_bpe(corpus, 200);
  for (int i = 0; i < 1000; ++i) {
    std::string text = random_ascii(rng, 64);
    // lowercase flag is on by default; round trip is exact on lowered text
    for (char& c : text) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    CHECK(decode(model, encode(model, text)) == text);
  }
}

TEST_CASE("bpe: round trip with arbitrary utf-8 bytes") {
  const std::vector<std::string> corpus = {"na\xC3\xAFve caf\xC3\xA9", "smil\xE2\x98\xBA face"};
  const auto model = train_bpe(corpus, 80);
  for (const auto& text : corpus) {
    CHECK(decode(model, encode(model, text)) == text);
  }
}

TEST_CASE("bpe: unknown base symbol errors by name, or maps to unk") {
  const std::vector<std::string> corpus = {"aaaa"};
  const auto model = train_bpe(corpus, 16);
  CHECK_THROWS_WITH_AS(encode(model, "az"), doctest::Contains("0x7A"), std::invalid_argument);
  const auto ids = encode(model, "az", false, UnknownPolicy::MapToUnk);
  REQUIRE(ids.size() == 2);
  CHECK(ids[1] == *model.unk_id());
}

TEST_CASE("bpe: specials are atomic and eos is appended on request") {
  const std::vector<std::string> corpus = {"hello world"};
  const auto model = train_bpe(corpus, 64);
  const auto with_eos = encode(model, "hello", true);
  REQUIRE(!with_eos.empty());
  CHECK(with_eos.back() == *model.eos_id());
  // a special occurring verbatim in text is emitted as one id, never split
  const auto ids = encode(model, "hello</s>world");
  const auto eos = *model.eos_id();
  CHECK(std::count(ids.begin(), ids.end(), eos) == 1);
  CHECK(decode(model, ids) == "hello</s>world");
}

TEST_CASE("bpe: merges never produce a special string") {
  // corpus dense in "</s>" substrings; merged tokens must never equal it
  const std::vector<std::string> corpus = {"</s></s></s></s></s></s>"};
  const auto model = train_bpe(corpus, 32);
  int hits = 0;
  for (const auto& [l, r] : model.merges()) {
    if (l + r == "</s>") ++hits;
  }
  CHECK(hits == 0);
}

TEST_CASE("bpe: lowercase flag folds case before everything else") {
  const std::vector<std::string> corpus = {"AbAb"};
  const auto model = train_bpe(corpus, 16);
  CHECK(!model.token_id("A").has_value());
  const auto ids = encode(model, "ABAB");
  CHECK(decode(model, ids) == "abab");
  BpeFlags keep_case;
  keep_case.lowercase = false;
  const auto cased = train_bpe(corpus, 16, kDefaultSpecials, keep_case);
  CHECK(cased.token_id("A").has_value());
}

TEST_CASE("bpe: vocab never exceeds the target and may stop early") {
  const std::vector<std::string> corpus = {"abcdefg"};  // no pair repeats
  const auto model = train_bpe(corpus, 100);
  CHECK(model.merges().empty());
  CHECK(model.vocab_size() <= 100);
}

TEST_CASE("bpe: monotone compression as the vocabulary grows") {
  std::vector<std::string> corpus;
  Rng rng(77);
  for (int i = 0; i < 30; ++i) {
    std::string doc;
    for (int w = 0; w < 30; ++w) {
      const char* words[] = {"the", "cat", "sat", "on", "a", "mat", "with", "tea"};
      doc += words[rng.below(8)];
      doc += ' ';
    }
    corpus.push_back(doc);
  }
  const std::string probe = "the cat sat on a mat";
  std::size_t prev = std::string::npos;
  for (const std::int32_t target : {16, 24, 32, 48, 64, 96}) {
    const auto model = train_bpe(corpus, target);
    const auto ids = encode(model, probe);
    CHECK(decode(model, ids) == probe);
    if (prev != std::string::npos) {
      CHECK(ids.size() <= prev);
    }
    prev = ids.size();
  }
}

TEST_CASE("bpe: merge outputs always present in vocab") {
  const std::vector<std::string> corpus = {"banana bandana"};
  const auto model = train_bpe(corpus, 40);
  for (const auto& [l, r] : model.merges()) {
    CHECK(model.token_id(l + r).has_value());
  }
}

TEST_CASE("bpe: json save/load round trip") {
  const std::vector<std::string> corpus = {"abcabc caf\xC3\xA9", "na\xC3\xAFve"};
  const auto model = train_bpe(corpus, 48);
  const auto path = std::filesystem::temp_directory_path() / "decaylens_bpe_test.json";
  save_tokenizer(model, path);
  const auto loaded = load_tokenizer(path);
  CHECK(loaded.vocab() == model.vocab());
  CHECK(loaded.merges() == model.merges());
  CHECK(loaded.specials() == model.specials());
  CHECK(loaded.flags().lowercase == model.flags().lowercase);
  const std::string probe = "abc caf\xC3\xA9";
  CHECK(encode(loaded, probe) == encode(model, probe));
  std::filesystem::remove(path);
}

TEST_CASE("bpe: display mapping is reversible for every byte") {
  std::string all_bytes;
  for (int b = 0; b < 256; ++b) all_bytes.push_back(static_cast<char>(b));
  CHECK(raw_from_display(display_token(all_bytes)) == all_bytes);
}
