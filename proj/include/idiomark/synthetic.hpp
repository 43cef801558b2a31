#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "idiomark/corpus.hpp"
#include "idiomark/errors.hpp"
#include "idiomark/rng.hpp"
#include "idiomark/textutil.hpp"

namespace idiomark {

struct SyntheticOptions {
  double train_fraction = 0.8;
  // Leading fraction of the one-shot inventory whose instances always carry
  // one fixed label (the post-processing rule's target population).
  double single_label_fraction = 0.25;
  // Chance that the MWE surfaces TitleCased in the target, exercising the
  // deformed-occurrence path.
  double deform_probability = 0.08;
};

struct SyntheticCorpus {
  Dataset train;
  Dataset dev;
};

namespace synth {

inline constexpr int kInventorySize = 12;

inline const std::array<const char*, kInventorySize>& zero_train_mwes() {
  static const std::array<const char*, kInventorySize> v = {
      "silver spoon", "cold shoulder", "red tape",      "dark horse",
      "sour grapes",  "loose cannon",  "smoking gun",   "gravy train",
      "glass ceiling", "snake oil",    "hot potato",    "wild goose"};
  return v;
}

inline const std::array<const char*, kInventorySize>& zero_dev_mwes() {
  static const std::array<const char*, kInventorySize> v = {
      "white elephant", "couch potato", "eager beaver", "road map",
      "book worm",      "night owl",    "early bird",   "top dog",
      "lame duck",      "fat cat",      "gold mine",    "big cheese"};
  return v;
}

inline const std::array<const char*, kInventorySize>& one_shot_mwes() {
  static const std::array<const char*, kInventorySize> v = {
      "big fish",   "milk tooth",    "green thumb", "old flame",
      "iron fist",  "open book",     "silver bullet", "cold feet",
      "high horse", "low blow",      "free ride",   "long shot"};
  return v;
}

// Class 0 cues co-occur with label 0 (idiomatic) at cue_strength; class 1
// with label 1. The cue is always the first word of the target.
inline const std::array<std::array<const char*, 3>, 2>& cue_words() {
  static const std::array<std::array<const char*, 3>, 2> v = {{
      {"apparently", "supposedly", "seemingly"},
      {"clearly", "plainly", "visibly"},
  }};
  return v;
}

struct Template {
  // Pieces joined as: cue, a, mwe, b, filler1, c, filler2, d.
  const char* a;
  const char* b;
  const char* c;
  const char* d;
};

inline const std::array<Template, 8>& templates() {
  static const std::array<Template, 8> v = {{
      {" , the ", " was mentioned at the ", " meeting in the ", " hall"},
      {" , nobody expected the ", " to matter after that ", " and ",
       " morning"},
      {" , a ", " turned up near the ", " market beside the ", " bridge"},
      {" , the report called the ", " a ", " problem for the ", " council"},
      {" , one ", " drawing showed the ", " sign above the ", " door"},
      {" , the ", " stayed on the ", " agenda for another ", " week"},
      {" , they discussed the ", " over a ", " dinner last ", " night"},
      {" , that ", " story reached the ", " office before the ", " recess"},
  }};
  return v;
}

inline const std::array<const char*, 10>& fillers() {
  static const std::array<const char*, 10> v = {
      "quiet",  "busy",   "narrow", "formal", "sunny",
      "crowded", "modest", "gray",  "lively", "plain"};
  return v;
}

inline const std::array<const char*, 6>& prev_contexts() {
  static const std::array<const char*, 6> v = {
      "The afternoon had been uneventful until then .",
      "Several neighbors had already gone home .",
      "The minutes were read aloud first .",
      "Rain had fallen for most of the day .",
      "The committee met twice that season .",
      "Nothing unusual had been reported before ."};
  return v;
}

inline const std::array<const char*, 6>& next_contexts() {
  static const std::array<const char*, 6> v = {
      "The discussion moved on soon after .",
      "Most people forgot about it quickly .",
      "A short note appeared in the paper .",
      "The evening ended without further remarks .",
      "Everyone left before the clock struck nine .",
      "The matter was settled the following week ."};
  return v;
}

inline std::string title_case(std::string_view s) {
  std::string out(s);
  bool at_word_start = true;
  for (char& c : out) {
    if (is_ascii_space(c)) {
      at_word_start = true;
    } else {
      if (at_word_start && c >= 'a' && c <= 'z')
        c = static_cast<char>(c - 'a' + 'A');
      at_word_start = false;
    }
  }
  return out;
}

}  // namespace synth

/// Deterministic corpus for desk-scale experiments. Each target opens with
/// a cue word whose class equals the label with probability cue_strength,
/// so Bayes error is 0 at cue_strength=1. Zero-shot rows use disjoint MWE
/// inventories between train and dev; one-shot rows cycle one shared
/// inventory, whose leading single-label MWEs keep one fixed label
/// everywhere (at cue_strength=1) while the rest alternate cue classes and
/// therefore see both labels.
inline SyntheticCorpus generate_synthetic_corpus(
    int n, double cue_strength, uint64_t seed,
    const SyntheticOptions& opt = {}) {
  if (n <= 0) throw ContractError("generate_synthetic_corpus: n must be > 0");
  if (cue_strength < 0.0 || cue_strength > 1.0)
    throw ContractError("generate_synthetic_corpus: cue_strength in [0,1]");

  using namespace synth;
  const int n_train = std::clamp<int>(
      static_cast<int>(std::lround(opt.train_fraction * n)), 1, n);
  const int n_single = std::clamp<int>(
      static_cast<int>(std::floor(opt.single_label_fraction * kInventorySize)),
      0, kInventorySize);

  SyntheticCorpus corpus;
  corpus.train.provenance = "synthetic:" + std::to_string(seed);
  corpus.dev.provenance = corpus.train.provenance;
  corpus.train.label_column = true;
  corpus.dev.label_column = true;

  Rng rng(seed);
  int oneshot_cursor = 0;
  std::array<int, kInventorySize> alternation{};
  int train_serial = 0, dev_serial = 0;

  for (int i = 0; i < n; ++i) {
    const bool is_train = i < n_train;
    const Setting setting = (i % 2 == 0) ? Setting::ZeroShot
                                         : Setting::OneShot;
    // Fixed draw pattern per row: sentences depend only on (n, seed), never
    // on cue_strength, which only flips labels through u_agree.
    const uint64_t u_mwe = rng.bounded(kInventorySize);
    const uint64_t u_template = rng.bounded(templates().size());
    const uint64_t u_cueclass = rng.bounded(2);
    const uint64_t u_cueword = rng.bounded(3);
    const double u_agree = rng.uniform();
    const double u_deform = rng.uniform();
    const uint64_t u_f1 = rng.bounded(fillers().size());
    const uint64_t u_f2 = rng.bounded(fillers().size());
    const uint64_t u_prev = rng.bounded(prev_contexts().size());
    const uint64_t u_next = rng.bounded(next_contexts().size());

    std::string mwe;
    int cue_class;
    if (setting == Setting::ZeroShot) {
      mwe = (is_train ? zero_train_mwes() : zero_dev_mwes())[u_mwe];
      cue_class = static_cast<int>(u_cueclass);
    } else {
      const int idx = oneshot_cursor++ % kInventorySize;
      mwe = one_shot_mwes()[idx];
      if (idx < n_single) {
        cue_class = idx % 2;  // fixed per MWE: unanimous at cue_strength=1
      } else {
        cue_class = alternation[idx]++ % 2;  // both labels guaranteed
      }
    }
    const int label = (u_agree < cue_strength) ? cue_class : 1 - cue_class;
    const std::string surface =
        (u_deform < opt.deform_probability) ? title_case(mwe) : mwe;

    const Template& t = templates()[u_template];
    std::string target = cue_words()[cue_class][u_cueword];
    target += t.a;
    target += surface;
    target += t.b;
    target += fillers()[u_f1];
    target += t.c;
    target += fillers()[u_f2];
    target += t.d;

    Instance inst;
    char buf[32];
    if (is_train)
      std::snprintf(buf, sizeof buf, "syn-tr-%05d", train_serial++);
    else
      std::snprintf(buf, sizeof buf, "syn-dv-%05d", dev_serial++);
    inst.id = buf;
    inst.language = Language::EN;
    inst.mwe = mwe;
    inst.setting = setting;
    inst.previous = prev_contexts()[u_prev];
    inst.target = std::move(target);
    inst.next = next_contexts()[u_next];
    inst.label = label;
    (is_train ? corpus.train : corpus.dev).instances.push_back(
        std::move(inst));
  }
  return corpus;
}

}  // namespace idiomark
