#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <set>
#include <string>

#include <idiomark/synthetic.hpp>

using namespace idiomark;

TEST_CASE("corpus has the requested size and split") {
  const SyntheticCorpus c = generate_synthetic_corpus(500, 1.0, 1);
  REQUIRE(c.train.size() == 400);
  REQUIRE(c.dev.size() == 100);
  REQUIRE(c.train.label_column);
  REQUIRE(c.dev.label_column);
}

TEST_CASE("generation is deterministic in the seed") {
  const SyntheticCorpus a = generate_synthetic_corpus(300, 0.9, 77);
  const SyntheticCorpus b = generate_synthetic_corpus(300, 0.9, 77);
  REQUIRE(serialize_dataset(a.train) == serialize_dataset(b.train));
  REQUIRE(serialize_dataset(a.dev) == serialize_dataset(b.dev));
  const SyntheticCorpus other = generate_synthetic_corpus(300, 0.9, 78);
  REQUIRE(serialize_dataset(a.train) != serialize_dataset(other.train));
}

TEST_CASE("row ids are unique and labels are binary") {
  const SyntheticCorpus c = generate_synthetic_corpus(400, 0.8, 5);
  std::set<std::string> ids;
  for (const Dataset* d : {&c.train, &c.dev})
    for (const Instance& i : d->instances) {
      ids.insert(i.id);
      REQUIRE(i.label.has_value());
      REQUIRE((*i.label == 0 || *i.label == 1));
      REQUIRE_FALSE(i.target.empty());
      REQUIRE_FALSE(i.mwe.empty());
    }
  REQUIRE(ids.size() == 400);
}

TEST_CASE("zero-shot expressions never cross the train/dev boundary") {
  const SyntheticCorpus c = generate_synthetic_corpus(1000, 1.0, 9);
  std::set<std::string> train_zero, dev_zero;
  for (const Instance& i : c.train.instances)
    if (i.setting == Setting::ZeroShot) train_zero.insert(i.mwe);
  for (const Instance& i : c.dev.instances)
    if (i.setting == Setting::ZeroShot) dev_zero.insert(i.mwe);
  for (const std::string& m : dev_zero) REQUIRE(train_zero.count(m) == 0);
  REQUIRE_FALSE(train_zero.empty());
  REQUIRE_FALSE(dev_zero.empty());
}

TEST_CASE("every one-shot dev expression appears in training") {
  const SyntheticCorpus c = generate_synthetic_corpus(1000, 1.0, 9);
  std::set<std::string> train_one;
  for (const Instance& i : c.train.instances)
    if (i.setting == Setting::OneShot) train_one.insert(i.mwe);
  for (const Instance& i : c.dev.instances)
    if (i.setting == Setting::OneShot)
      REQUIRE(train_one.count(i.mwe) == 1);
}

TEST_CASE("full cue strength makes the cue word decide the label") {
  const SyntheticCorpus c = generate_synthetic_corpus(600, 1.0, 3);
  const std::set<std::string> class1 = {"clearly", "plainly", "visibly"};
  const std::set<std::string> class0 = {"apparently", "supposedly",
                                        "seemingly"};
  for (const Dataset* d : {&c.train, &c.dev})
    for (const Instance& i : d->instances) {
      const std::string cue = i.target.substr(0, i.target.find(' '));
      if (class1.count(cue)) REQUIRE(*i.label == 1);
      else {
        REQUIRE(class0.count(cue) == 1);
        REQUIRE(*i.label == 0);
      }
    }
}

TEST_CASE("weak cue strength flips labels at roughly the stated rate") {
  const SyntheticCorpus c = generate_synthetic_corpus(4000, 0.75, 13);
  const std::set<std::string> class1 = {"clearly", "plainly", "visibly"};
  int agree = 0, total = 0;
  for (const Instance& i : c.train.instances) {
    const std::string cue = i.target.substr(0, i.target.find(' '));
    const int cue_label = class1.count(cue) ? 1 : 0;
    agree += (*i.label == cue_label) ? 1 : 0;
    ++total;
  }
  const double rate = double(agree) / total;
  REQUIRE(rate > 0.70);
  REQUIRE(rate < 0.80);
}

TEST_CASE("a fixed block of one-shot expressions is single-label corpus-wide") {
  const SyntheticCorpus c = generate_synthetic_corpus(1200, 1.0, 21);
  // collect per-expression label sets over the one-shot rows
  std::map<std::string, std::set<int>> seen;
  for (const Dataset* d : {&c.train, &c.dev})
    for (const Instance& i : d->instances)
      if (i.setting == Setting::OneShot) seen[i.mwe].insert(*i.label);
  int single = 0, multi = 0;
  for (const auto& [mwe, labels] : seen)
    (labels.size() == 1 ? single : multi)++;
  REQUIRE(single >= 3);
  REQUIRE(multi > 0);
}

TEST_CASE("some targets carry a capitalization deformation") {
  const SyntheticCorpus c = generate_synthetic_corpus(3000, 1.0, 2);
  int deformed = 0, total = 0;
  for (const Instance& i : c.train.instances) {
    ++total;
    // TitleCase deformation: surface form absent, case-blind form present
    if (i.target.find(i.mwe) == std::string::npos) ++deformed;
  }
  const double rate = double(deformed) / total;
  REQUIRE(rate > 0.04);
  REQUIRE(rate < 0.13);
}

TEST_CASE("contexts are populated") {
  const SyntheticCorpus c = generate_synthetic_corpus(200, 1.0, 4);
  for (const Instance& i : c.train.instances) {
    REQUIRE_FALSE(i.previous.empty());
    REQUIRE_FALSE(i.next.empty());
  }
}

TEST_CASE("invalid generation parameters are contract violations") {
  REQUIRE_THROWS_AS(generate_synthetic_corpus(0, 1.0, 1), ContractError);
  REQUIRE_THROWS_AS(generate_synthetic_corpus(-5, 1.0, 1), ContractError);
  REQUIRE_THROWS_AS(generate_synthetic_corpus(100, 1.5, 1), ContractError);
  REQUIRE_THROWS_AS(generate_synthetic_corpus(100, -0.1, 1), ContractError);
}
