#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <idiomark/preprocess.hpp>
#include <idiomark/tokenizer.hpp>

using namespace idiomark;

TEST_CASE("exact occurrence is found with offsets and not deformed") {
  const MweSpan s = find_mwe_span("he caught a big fish today", "big fish");
  REQUIRE(s.has_offsets());
  REQUIRE_FALSE(s.deformed);
  REQUIRE(s.start == 12);
  REQUIRE(s.end == 20);
}

TEST_CASE("case-changed occurrence reports deformation") {
  const MweSpan s = find_mwe_span("the Big Fish swam off", "big fish");
  REQUIRE(s.has_offsets());
  REQUIRE(s.deformed);
  REQUIRE(s.start == 4);
  REQUIRE(s.end == 12);
}

TEST_CASE("absent expression yields no offsets") {
  const MweSpan s = find_mwe_span("nothing to see here", "big fish");
  REQUIRE_FALSE(s.has_offsets());
  REQUIRE(s.deformed);
}

TEST_CASE("word boundaries block substring matches") {
  REQUIRE_FALSE(find_mwe_span("herbig fish", "big fish").has_offsets());
  REQUIRE_FALSE(find_mwe_span("big fishing", "big fish").has_offsets());
  REQUIRE(find_mwe_span("a big fish.", "big fish").has_offsets());
  REQUIRE(find_mwe_span("(big fish)", "big fish").has_offsets());
}

TEST_CASE("expression whitespace is collapsed before matching") {
  const MweSpan s = find_mwe_span("one big  fish here", "big   fish");
  REQUIRE(s.has_offsets());
  REQUIRE_FALSE(s.deformed);
  // span covers the actual surface run, double space included
  REQUIRE(s.start == 4);
  REQUIRE(s.end == 13);
}

TEST_CASE("exact match wins over an earlier deformed one") {
  const MweSpan s = find_mwe_span("Big fish or big fish", "big fish");
  REQUIRE_FALSE(s.deformed);
  REQUIRE(s.start == 12);
}

TEST_CASE("empty expression is a contract violation") {
  REQUIRE_THROWS_AS(find_mwe_span("text", ""), ContractError);
  REQUIRE_THROWS_AS(find_mwe_span("text", "   "), ContractError);
}

TEST_CASE("marking wraps the span without padding spaces") {
  const std::string target = "he caught a big fish today";
  const MweSpan s = find_mwe_span(target, "big fish");
  REQUIRE(mark_mwe(target, s) == "he caught a [SEP]big fish[SEP] today");
}

TEST_CASE("marking a deformed or absent span is a contract violation") {
  MweSpan deformed;
  deformed.start = 0;
  deformed.end = 3;
  deformed.deformed = true;
  REQUIRE_THROWS_AS(mark_mwe("Big fish", deformed), ContractError);
  REQUIRE_THROWS_AS(mark_mwe("text", MweSpan{}), ContractError);
}

TEST_CASE("marking golden cases") {
  std::ifstream in(std::filesystem::path(TEST_DATA_DIR) /
                   "marking_golden.txt");
  REQUIRE(in.good());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') lines.push_back(line);
  REQUIRE(lines.size() % 3 == 0);
  REQUIRE(lines.size() >= 9);

  for (size_t i = 0; i < lines.size(); i += 3) {
    const std::string& mwe = lines[i];
    const std::string& input = lines[i + 1];
    const std::string& expected = lines[i + 2];
    CAPTURE(mwe, input);
    const MweSpan span = find_mwe_span(input, mwe);
    const std::string got =
        (!span.deformed && span.has_offsets()) ? mark_mwe(input, span) : input;
    REQUIRE(got == expected);
  }
}

namespace {

Instance make_instance() {
  Instance inst;
  inst.id = "t1";
  inst.mwe = "big fish";
  inst.previous = "Intro sentence.";
  inst.target = "he caught a big fish today";
  inst.next = "Outro sentence.";
  return inst;
}

}  // namespace

TEST_CASE("build_example marks the target by default") {
  const Instance inst = make_instance();
  BuildPolicy p;
  REQUIRE(build_example(inst, p) == "he caught a [SEP]big fish[SEP] today");
}

TEST_CASE("build_example leaves deformed occurrences unmarked by default") {
  Instance inst = make_instance();
  inst.target = "he caught a Big Fish today";
  BuildPolicy p;
  REQUIRE(build_example(inst, p) == "he caught a Big Fish today");

  p.marking_mode = MarkingMode::Always;
  REQUIRE(build_example(inst, p) == "he caught a [SEP]Big Fish[SEP] today");
}

TEST_CASE("build_example with context joins non-empty parts") {
  Instance inst = make_instance();
  BuildPolicy p;
  p.include_context = true;
  REQUIRE(build_example(inst, p) ==
          "Intro sentence. he caught a [SEP]big fish[SEP] today "
          "Outro sentence.");

  inst.previous.clear();
  REQUIRE(build_example(inst, p) ==
          "he caught a [SEP]big fish[SEP] today Outro sentence.");
}

TEST_CASE("build_example without marking keeps the raw target") {
  const Instance inst = make_instance();
  BuildPolicy p;
  p.mark_idiom = false;
  REQUIRE(build_example(inst, p) == "he caught a big fish today");
}

TEST_CASE("build_example rejects tiny budgets") {
  BuildPolicy p;
  p.max_tokens = 8;
  REQUIRE_THROWS_AS(build_example(make_instance(), p), ValidationError);
}

TEST_CASE("augmentation is deterministic per seed") {
  const std::string s = "he caught a [SEP]big fish[SEP] today";
  REQUIRE(aeda_augment(s, 7) == aeda_augment(s, 7));
  // different seeds almost surely differ on a sentence this long
  bool any_diff = false;
  for (uint64_t k = 0; k < 8 && !any_diff; ++k)
    any_diff = aeda_augment(s, k) != aeda_augment(s, k + 100);
  REQUIRE(any_diff);
}

TEST_CASE("augmentation inserts only punctuation words, bounded count") {
  const std::string s = "one two three four five six seven eight nine";
  for (uint64_t seed = 0; seed < 200; ++seed) {
    const std::string aug = aeda_augment(s, seed);
    const auto orig = split_whitespace(s);
    const auto words = split_whitespace(aug);
    const size_t inserted = words.size() - orig.size();
    REQUIRE(inserted >= 1);
    REQUIRE(inserted <= orig.size() / 3);
    // non-punctuation words survive in order
    std::vector<std::string> kept;
    for (const auto& w : words)
      if (w.size() != 1 || std::string(".;?:!,").find(w[0]) ==
                               std::string::npos)
        kept.push_back(w);
    REQUIRE(kept == orig);
  }
}

TEST_CASE("augmentation never splits the marked span") {
  const std::string s = "alpha [SEP]big fish[SEP] omega";
  for (uint64_t seed = 0; seed < 300; ++seed) {
    const std::string aug = aeda_augment(s, seed);
    REQUIRE(aug.find("[SEP]big fish[SEP]") != std::string::npos);
  }
}

TEST_CASE("augmenting an empty sentence is invalid") {
  REQUIRE_THROWS_AS(aeda_augment("", 1), ValidationError);
}

TEST_CASE("expression token position counts words before the span") {
  Vocab v;
  for (const char* w : {"he", "caught", "a", "big", "fish", "today"})
    v.add(w);
  WordTokenizer tok(std::move(v));

  Instance inst = make_instance();
  REQUIRE(first_mwe_token_position(inst, tok) == 3);

  inst.target = "big fish first";
  REQUIRE(first_mwe_token_position(inst, tok) == 0);

  inst.target = "no match here";
  REQUIRE(first_mwe_token_position(inst, tok) == -1);
}
