#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <string>
#include <vector>

#include <idiomark/corpus.hpp>
#include <idiomark/tokenizer.hpp>

using namespace idiomark;

namespace {

WordTokenizer toy_tokenizer() {
  Vocab v;
  for (const char* w : {"a", "b", "c", "d", "big", "fish", "he", "caught"})
    v.add(w);
  return WordTokenizer(std::move(v));
}

}  // namespace

TEST_CASE("special ids occupy the first four slots") {
  Vocab v;
  REQUIRE(v.special_ids.pad == 0);
  REQUIRE(v.special_ids.unk == 1);
  REQUIRE(v.special_ids.cls == 2);
  REQUIRE(v.special_ids.sep == 3);
  REQUIRE(v.size() == 4);
  REQUIRE(v.id_to_token[0] == "[PAD]");
  REQUIRE(v.id_to_token[3] == "[SEP]");
}

TEST_CASE("marked text maps to ids with the span range") {
  WordTokenizer tok = toy_tokenizer();
  const TokenizedInput t = tok.tokenize("a [SEP]b c[SEP] d", 128);
  // [CLS] a [SEP] b c [SEP] d
  REQUIRE(t.ids == std::vector<int>{2, 4, 3, 5, 6, 3, 7});
  REQUIRE(t.attention_mask == std::vector<uint8_t>{1, 1, 1, 1, 1, 1, 1});
  REQUIRE(t.mwe_token_range.has_value());
  REQUIRE(t.mwe_token_range->first == 3);
  REQUIRE(t.mwe_token_range->second == 4);
}

TEST_CASE("unmarked text has no span range") {
  WordTokenizer tok = toy_tokenizer();
  const TokenizedInput t = tok.tokenize("a b c", 128);
  REQUIRE(t.ids == std::vector<int>{2, 4, 5, 6});
  REQUIRE_FALSE(t.mwe_token_range.has_value());
}

TEST_CASE("unknown words map to unk, punctuation splits off words") {
  WordTokenizer tok = toy_tokenizer();
  const TokenizedInput t = tok.tokenize("a zebra, b.", 128);
  // zebra -> unk, comma and period are separate unknown tokens
  REQUIRE(t.ids.size() == 6);
  REQUIRE(t.ids[0] == 2);
  REQUIRE(t.ids[1] == 4);
  REQUIRE(t.ids[2] == 1);
  REQUIRE(t.ids[3] == 1);
  REQUIRE(t.ids[4] == 5);
  REQUIRE(t.ids[5] == 1);
}

TEST_CASE("tokenization lowercases words") {
  WordTokenizer tok = toy_tokenizer();
  const TokenizedInput t = tok.tokenize("Big FISH", 128);
  REQUIRE(t.ids == std::vector<int>{2, 8, 9});
}

TEST_CASE("truncation keeps the head and clamps the span range") {
  WordTokenizer tok = toy_tokenizer();
  // [CLS] a [SEP] b c [SEP] d -> capped at 5 positions
  const TokenizedInput t = tok.tokenize("a [SEP]b c[SEP] d", 5);
  REQUIRE(t.ids == std::vector<int>{2, 4, 3, 5, 6});
  REQUIRE(t.mwe_token_range.has_value());
  REQUIRE(t.mwe_token_range->first == 3);
  REQUIRE(t.mwe_token_range->second == 4);

  // cutting into the span start drops the range entirely
  const TokenizedInput u = tok.tokenize("a [SEP]b c[SEP] d", 3);
  REQUIRE(u.ids == std::vector<int>{2, 4, 3});
  REQUIRE_FALSE(u.mwe_token_range.has_value());
}

TEST_CASE("unbalanced markers are rejected") {
  WordTokenizer tok = toy_tokenizer();
  REQUIRE_THROWS_MATCHES(tok.tokenize("a [SEP]b c", 128), ValidationError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("unbalanced")));
  REQUIRE_THROWS_AS(tok.tokenize("[SEP]a[SEP] b [SEP]c[SEP]", 128),
                    ValidationError);
}

TEST_CASE("token budget below two is a contract violation") {
  WordTokenizer tok = toy_tokenizer();
  REQUIRE_THROWS_AS(tok.tokenize("a b", 1), ContractError);
}

TEST_CASE("count_tokens excludes the class token") {
  WordTokenizer tok = toy_tokenizer();
  REQUIRE(count_tokens(tok, "a b c") == 3);
  REQUIRE(count_tokens(tok, "") == 0);
}

TEST_CASE("vocabulary builds by frequency then lexical order") {
  Dataset d;
  auto add_row = [&](const std::string& target) {
    Instance i;
    i.id = std::to_string(d.size());
    i.mwe = "x";
    i.target = target;
    d.instances.push_back(i);
  };
  add_row("pear pear apple");
  add_row("pear mango apple");
  const Vocab v = build_vocab(d);
  // pear x3, apple x2, mango x1
  REQUIRE(v.size() == 7);
  REQUIRE(v.id_to_token[4] == "pear");
  REQUIRE(v.id_to_token[5] == "apple");
  REQUIRE(v.id_to_token[6] == "mango");
}

TEST_CASE("vocabulary respects the frequency floor") {
  Dataset d;
  Instance i;
  i.id = "0";
  i.mwe = "x";
  i.target = "solo duo duo";
  d.instances.push_back(i);
  const Vocab v = build_vocab(d, 2);
  REQUIRE(v.size() == 5);
  REQUIRE(v.id_to_token[4] == "duo");
}

TEST_CASE("markers in text never enter the vocabulary") {
  Dataset d;
  Instance i;
  i.id = "0";
  i.mwe = "big fish";
  i.target = "a [SEP]big fish[SEP] b";
  d.instances.push_back(i);
  const Vocab v = build_vocab(d);
  for (const std::string& t : v.id_to_token) {
    REQUIRE(t != "[SEP]big");
    REQUIRE(t != "fish[SEP]");
  }
  // the sep marker exists once, as special id 3
  int seps = 0;
  for (const std::string& t : v.id_to_token) seps += t == "[SEP]" ? 1 : 0;
  REQUIRE(seps == 1);
}

TEST_CASE("vocab file round-trips") {
  WordTokenizer tok = toy_tokenizer();
  const auto path = std::filesystem::temp_directory_path() / "idm_vocab.txt";
  save_vocab(tok.vocab(), path);
  const Vocab v2 = load_vocab(path);
  REQUIRE(v2.id_to_token == tok.vocab().id_to_token);
  REQUIRE(serialize_vocab(v2) == serialize_vocab(tok.vocab()));
}

TEST_CASE("corrupted vocab headers are rejected") {
  REQUIRE_THROWS_AS(parse_vocab("[PAD]\n[UNK]\n[CLS]\n"), SchemaError);
  REQUIRE_THROWS_AS(parse_vocab("[UNK]\n[PAD]\n[CLS]\n[SEP]\na\n"),
                    SchemaError);
  REQUIRE_THROWS_AS(parse_vocab("[PAD]\n[UNK]\n[CLS]\n[SEP]\na\na\n"),
                    SchemaError);
}

TEST_CASE("detokenize inverts known ids and rejects bad ones") {
  WordTokenizer tok = toy_tokenizer();
  REQUIRE(tok.detokenize({2, 4, 3}) == std::vector<std::string>{"[CLS]", "a",
                                                                "[SEP]"});
  REQUIRE_THROWS_AS(tok.detokenize({99}), ValidationError);
}

TEST_CASE("whitespace tokenizer knows only specials") {
  WhitespaceTokenizer tok;
  const TokenizedInput t = tok.tokenize("hello [SEP] there", 128);
  REQUIRE(t.ids == std::vector<int>{2, 1, 3, 1});
  REQUIRE(tok.vocab_size() == 4);
}
