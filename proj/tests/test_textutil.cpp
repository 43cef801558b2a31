#include <catch2/catch_amalgamated.hpp>

#include <idiomark/textutil.hpp>

using namespace idiomark;

TEST_CASE("ascii lowering leaves non-letters alone") {
  REQUIRE(to_lower("Big FISH 42!") == "big fish 42!");
  REQUIRE(to_lower("") == "");
}

TEST_CASE("lowering preserves multibyte sequences") {
  // UTF-8 continuation bytes have the high bit set and must pass through.
  const std::string s = "Caf\xc3\xa9 Déjà";
  REQUIRE(to_lower(s) == "caf\xc3\xa9 d\xc3\xa9j\xc3\xa0");
}

TEST_CASE("trim strips only outer whitespace") {
  REQUIRE(trim("  a b  ") == "a b");
  REQUIRE(trim("\t\r\n x \n") == "x");
  REQUIRE(trim("") == "");
  REQUIRE(trim("   ") == "");
}

TEST_CASE("collapse_whitespace folds runs into single spaces") {
  REQUIRE(collapse_whitespace("a   b\t\tc") == "a b c");
  REQUIRE(collapse_whitespace("  a  ") == "a");
  REQUIRE(collapse_whitespace("a") == "a");
  REQUIRE(collapse_whitespace("") == "");
}

TEST_CASE("split_whitespace drops empty fields") {
  const auto parts = split_whitespace("  one\ttwo   three ");
  REQUIRE(parts == std::vector<std::string>{"one", "two", "three"});
  REQUIRE(split_whitespace("   ").empty());
}

TEST_CASE("word characters include digits and non-ascii bytes") {
  REQUIRE(is_word_char('a'));
  REQUIRE(is_word_char('Z'));
  REQUIRE(is_word_char('7'));
  REQUIRE(is_word_char(static_cast<char>(0xc3)));
  REQUIRE_FALSE(is_word_char(' '));
  REQUIRE_FALSE(is_word_char('.'));
  REQUIRE_FALSE(is_word_char('['));
}
