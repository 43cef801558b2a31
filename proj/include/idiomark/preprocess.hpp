#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "idiomark/corpus.hpp"
#include "idiomark/errors.hpp"
#include "idiomark/rng.hpp"
#include "idiomark/textutil.hpp"
#include "idiomark/tokenization.hpp"

namespace idiomark {

constexpr std::string_view kDefaultSep = "[SEP]";

/// Where (and whether) an MWE occurs in a target sentence. deformed=true
/// means no exact surface match exists; offsets are then either the
/// case-insensitive occurrence or absent entirely.
struct MweSpan {
  static constexpr size_t npos = std::numeric_limits<size_t>::max();
  size_t start = npos;
  size_t end = npos;
  bool deformed = true;

  bool has_offsets() const { return start != npos; }
};

enum class MarkingMode {
  Always,          // mark any occurrence, deformed or not
  UndeformedOnly,  // mark only exact surface matches
};

struct BuildPolicy {
  bool include_context = false;
  bool mark_idiom = true;
  MarkingMode marking_mode = MarkingMode::UndeformedOnly;
  int max_tokens = 128;
  std::string sep = std::string(kDefaultSep);
};

namespace detail {

// Matches `pattern` (whitespace already collapsed) at target[pos]; a single
// space in the pattern consumes any whitespace run in the target. Returns
// the end offset, or npos on mismatch.
inline size_t match_at(std::string_view target, size_t pos,
                       std::string_view pattern, bool fold_case) {
  size_t t = pos;
  for (size_t p = 0; p < pattern.size(); ++p) {
    if (pattern[p] == ' ') {
      if (t >= target.size() || !is_ascii_space(target[t]))
        return MweSpan::npos;
      while (t < target.size() && is_ascii_space(target[t])) ++t;
    } else {
      if (t >= target.size()) return MweSpan::npos;
      const char a = fold_case ? ascii_lower(target[t]) : target[t];
      const char b = fold_case ? ascii_lower(pattern[p]) : pattern[p];
      if (a != b) return MweSpan::npos;
      ++t;
    }
  }
  return t;
}

inline size_t find_word_bounded(std::string_view target,
                                std::string_view pattern, bool fold_case,
                                size_t* end_out) {
  for (size_t i = 0; i < target.size(); ++i) {
    if (i > 0 && is_word_char(target[i - 1])) continue;
    const size_t end = match_at(target, i, pattern, fold_case);
    if (end == MweSpan::npos) continue;
    if (end < target.size() && is_word_char(target[end])) continue;
    *end_out = end;
    return i;
  }
  return MweSpan::npos;
}

}  // namespace detail

/// First word-boundary occurrence of mwe in target. An exact (case and
/// surface) match wins and is reported with deformed=false; failing that, a
/// case-insensitive match is reported with deformed=true; failing that too,
/// the span has no offsets. Whitespace runs never count as deformation.
inline MweSpan find_mwe_span(std::string_view target, std::string_view mwe) {
  const std::string pattern = collapse_whitespace(mwe);
  if (pattern.empty()) throw ContractError("find_mwe_span: empty MWE");
  MweSpan span;
  size_t end = 0;
  size_t start = detail::find_word_bounded(target, pattern, false, &end);
  if (start != MweSpan::npos) {
    span.start = start;
    span.end = end;
    span.deformed = false;
    return span;
  }
  start = detail::find_word_bounded(target, pattern, true, &end);
  if (start != MweSpan::npos) {
    span.start = start;
    span.end = end;
  }
  return span;
}

/// Wraps the span with sep markers: "a big fish here" -> "a [SEP]big
/// fish[SEP] here". Only exact occurrences may be marked.
inline std::string mark_mwe(std::string_view target, const MweSpan& span,
                            std::string_view sep = kDefaultSep) {
  if (span.deformed || !span.has_offsets())
    throw ContractError("mark_mwe: span is deformed or absent");
  if (span.end > target.size() || span.start >= span.end)
    throw ContractError("mark_mwe: span offsets out of range");
  std::string out;
  out.reserve(target.size() + 2 * sep.size());
  out.append(target.substr(0, span.start));
  out.append(sep);
  out.append(target.substr(span.start, span.end - span.start));
  out.append(sep);
  out.append(target.substr(span.end));
  return out;
}

/// Model-ready text for one instance: optional MWE marking in the target,
/// optional context concatenation. Character-level only; token truncation
/// is the tokenizer's job (policy.max_tokens travels with the text).
inline std::string build_example(const Instance& inst,
                                 const BuildPolicy& policy) {
  if (policy.max_tokens < 16)
    throw ValidationError("build_example: max_tokens must be >= 16");
  std::string target = inst.target;
  if (policy.mark_idiom) {
    const MweSpan span = find_mwe_span(inst.target, inst.mwe);
    const bool markable = policy.marking_mode == MarkingMode::Always
                              ? span.has_offsets()
                              : !span.deformed;
    if (markable) target = mark_mwe(inst.target, span, policy.sep);
  }
  if (!policy.include_context) return target;
  std::string out;
  const std::string* parts[] = {&inst.previous, &target, &inst.next};
  for (const std::string* part : parts) {
    if (part->empty()) continue;
    if (!out.empty()) out.push_back(' ');
    out.append(*part);
  }
  return out;
}

/// AEDA: insert k random punctuation marks (k uniform in [1, max(1, n/3)])
/// as standalone words at random word gaps. Gaps strictly inside a
/// sep-marked MWE region are never chosen, so augmentation cannot split the
/// marked span. Deterministic given seed.
inline std::string aeda_augment(std::string_view sentence, uint64_t seed,
                                std::string_view sep = kDefaultSep) {
  static const char* const kMarks[] = {".", ";", "?", ":", "!", ","};
  const std::vector<std::string> words = split_whitespace(sentence);
  const size_t n = words.size();
  if (n == 0) throw ValidationError("aeda_augment: empty sentence");

  // Gap g sits before word g; gap n is after the last word. Protected gaps
  // are those between two words of the marked region.
  size_t first_marked = n, last_marked = n;
  for (size_t i = 0; i < n; ++i) {
    if (words[i].find(sep) == std::string::npos) continue;
    if (first_marked == n) first_marked = i;
    last_marked = i;
  }
  std::vector<size_t> allowed;
  allowed.reserve(n + 1);
  for (size_t g = 0; g <= n; ++g) {
    const bool interior =
        first_marked < n && g > first_marked && g <= last_marked;
    if (!interior) allowed.push_back(g);
  }

  Rng rng(seed);
  const uint64_t kmax = std::max<uint64_t>(1, n / 3);
  const uint64_t k = 1 + rng.bounded(kmax);
  std::vector<std::vector<std::string>> inserts(n + 1);
  for (uint64_t i = 0; i < k; ++i) {
    const size_t gap = allowed[rng.bounded(allowed.size())];
    inserts[gap].push_back(kMarks[rng.bounded(6)]);
  }

  std::vector<std::string> out;
  out.reserve(n + k);
  for (size_t i = 0; i <= n; ++i) {
    for (const std::string& m : inserts[i]) out.push_back(m);
    if (i < n) out.push_back(words[i]);
  }
  return join(out, " ");
}

/// Content-token index (CLS excluded) of the first MWE token in the target,
/// or -1 when the MWE does not occur. Counted by tokenizing the prefix
/// before the occurrence, so the answer is in the tokenizer's own units.
inline int first_mwe_token_position(const Instance& inst,
                                    const Tokenizer& tok) {
  const MweSpan span = find_mwe_span(inst.target, inst.mwe);
  if (!span.has_offsets()) return -1;
  const std::string_view prefix =
      std::string_view(inst.target).substr(0, span.start);
  return tok.count_tokens(prefix);
}

}  // namespace idiomark
