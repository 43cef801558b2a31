#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "idiomark/corpus.hpp"
#include "idiomark/errors.hpp"
#include "idiomark/textutil.hpp"
#include "idiomark/tokenization.hpp"

namespace idiomark {

inline constexpr const char* kSpecialForms[4] = {"[PAD]", "[UNK]", "[CLS]",
                                                 "[SEP]"};

struct Vocab {
  std::vector<std::string> id_to_token;
  std::unordered_map<std::string, int> token_to_id;
  SpecialIds special_ids;

  Vocab() {
    for (const char* form : kSpecialForms) {
      token_to_id.emplace(form, static_cast<int>(id_to_token.size()));
      id_to_token.emplace_back(form);
    }
  }

  int size() const { return static_cast<int>(id_to_token.size()); }

  void add(const std::string& token) {
    if (token_to_id.count(token)) return;
    token_to_id.emplace(token, static_cast<int>(id_to_token.size()));
    id_to_token.push_back(token);
  }

  // Content-token lookup; unknown tokens map to unk.
  int lookup(const std::string& token) const {
    const auto it = token_to_id.find(token);
    return it == token_to_id.end() ? special_ids.unk : it->second;
  }
};

namespace detail {

enum class TokKind { Word, Punct, Marker };

struct RawToken {
  TokKind kind;
  std::string text;
};

// Lowercased words (runs of word chars), single-char punctuation, and the
// literal marker string as its own token kind.
inline std::vector<RawToken> scan_tokens(std::string_view text,
                                         std::string_view marker) {
  std::vector<RawToken> out;
  size_t i = 0;
  while (i < text.size()) {
    if (is_ascii_space(text[i])) {
      ++i;
      continue;
    }
    if (!marker.empty() && text.compare(i, marker.size(), marker) == 0) {
      out.push_back({TokKind::Marker, std::string(marker)});
      i += marker.size();
      continue;
    }
    if (is_word_char(text[i])) {
      const size_t start = i;
      while (i < text.size() && is_word_char(text[i])) ++i;
      std::string word(text.substr(start, i - start));
      std::transform(word.begin(), word.end(), word.begin(), ascii_lower);
      out.push_back({TokKind::Word, std::move(word)});
      continue;
    }
    out.push_back({TokKind::Punct, std::string(1, text[i])});
    ++i;
  }
  return out;
}

}  // namespace detail

/// Frequency-thresholded vocabulary over all text fields of the dataset.
/// Ordering is frequency-descending with lexicographic tie-break, so the id
/// assignment is independent of row order.
inline Vocab build_vocab(const Dataset& corpus, int min_freq = 1) {
  if (corpus.empty()) throw ValidationError("build_vocab: empty corpus");
  std::map<std::string, int64_t> freq;
  for (const Instance& inst : corpus.instances) {
    for (const std::string* field : {&inst.previous, &inst.target,
                                     &inst.next}) {
      for (auto& t : detail::scan_tokens(*field, kSpecialForms[3]))
        if (t.kind != detail::TokKind::Marker) ++freq[t.text];
    }
  }
  std::vector<std::pair<std::string, int64_t>> entries;
  entries.reserve(freq.size());
  for (auto& kv : freq)
    if (kv.second >= min_freq) entries.push_back(kv);
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocab v;
  for (auto& e : entries) v.add(e.first);
  return v;
}

/// Word-level tokenizer over a fixed vocabulary. CLS is always prepended
/// and counts toward max_tokens; truncation keeps the front of the
/// sequence. A "[SEP]"-delimited region sets mwe_token_range to the tokens
/// strictly between the two markers; if truncation removes the opening
/// marker (or everything after it) the range is absent.
class WordTokenizer final : public Tokenizer {
 public:
  explicit WordTokenizer(Vocab vocab) : vocab_(std::move(vocab)) {}

  TokenizedInput tokenize(std::string_view text,
                          int max_tokens) const override {
    if (max_tokens < 2)
      throw ContractError("tokenize: max_tokens must be >= 2");
    const SpecialIds sp = vocab_.special_ids;
    std::vector<int> ids{sp.cls};
    std::vector<int> marker_pos;
    for (auto& t : detail::scan_tokens(text, kSpecialForms[3])) {
      if (t.kind == detail::TokKind::Marker) {
        marker_pos.push_back(static_cast<int>(ids.size()));
        ids.push_back(sp.sep);
      } else {
        ids.push_back(vocab_.lookup(t.text));
      }
    }
    if (marker_pos.size() != 0 && marker_pos.size() != 2)
      throw ValidationError("tokenize: unbalanced [SEP] markers");

    if (static_cast<int>(ids.size()) > max_tokens) ids.resize(max_tokens);
    TokenizedInput out;
    const int last = static_cast<int>(ids.size()) - 1;
    if (marker_pos.size() == 2 && marker_pos[0] + 1 <= last) {
      const int lo = marker_pos[0] + 1;
      const int hi = std::min(marker_pos[1] - 1, last);
      if (lo <= hi) out.mwe_token_range = std::make_pair(lo, hi);
    }
    out.ids = std::move(ids);
    out.attention_mask.assign(out.ids.size(), 1);
    return out;
  }

  int vocab_size() const override { return vocab_.size(); }
  SpecialIds specials() const override { return vocab_.special_ids; }

  std::vector<std::string> detokenize(
      const std::vector<int>& ids) const override {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int id : ids) {
      if (id < 0 || id >= vocab_.size())
        throw ValidationError("detokenize: id out of range: " +
                              std::to_string(id));
      out.push_back(vocab_.id_to_token[id]);
    }
    return out;
  }

  const Vocab& vocab() const { return vocab_; }

 private:
  Vocab vocab_;
};

/// Minimal alternative tokenizer: plain whitespace splitting, no vocabulary
/// of its own. Mainly demonstrates that stats and encoding code work
/// against the abstract interface; every content word maps to unk.
class WhitespaceTokenizer final : public Tokenizer {
 public:
  TokenizedInput tokenize(std::string_view text,
                          int max_tokens) const override {
    if (max_tokens < 2)
      throw ContractError("tokenize: max_tokens must be >= 2");
    TokenizedInput out;
    out.ids.push_back(sp_.cls);
    for (const std::string& w : split_whitespace(text))
      out.ids.push_back(w == kSpecialForms[3] ? sp_.sep : sp_.unk);
    if (static_cast<int>(out.ids.size()) > max_tokens)
      out.ids.resize(max_tokens);
    out.attention_mask.assign(out.ids.size(), 1);
    return out;
  }
  int vocab_size() const override { return 4; }
  SpecialIds specials() const override { return sp_; }
  std::vector<std::string> detokenize(
      const std::vector<int>& ids) const override {
    std::vector<std::string> out;
    for (int id : ids) {
      if (id < 0 || id >= 4)
        throw ValidationError("detokenize: id out of range: " +
                              std::to_string(id));
      out.push_back(kSpecialForms[id]);
    }
    return out;
  }

 private:
  SpecialIds sp_;
};

/// Newline-delimited token list, line number = id; the first four lines are
/// the special tokens.
inline std::string serialize_vocab(const Vocab& v) {
  std::ostringstream out;
  for (const std::string& t : v.id_to_token) out << t << "\n";
  return out.str();
}

inline void save_vocab(const Vocab& v, const std::filesystem::path& path) {
  detail::write_file_atomic(path, serialize_vocab(v));
}

inline Vocab parse_vocab(std::string_view text) {
  Vocab v;
  size_t line_no = 0;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string token(text.substr(pos, end - pos));
    if (!token.empty() && token.back() == '\r') token.pop_back();
    if (line_no < 4) {
      if (token != kSpecialForms[line_no])
        throw SchemaError("vocab header line " + std::to_string(line_no) +
                          " must be " + kSpecialForms[line_no]);
    } else {
      if (token.empty())
        throw SchemaError("vocab: empty token at line " +
                          std::to_string(line_no));
      if (v.token_to_id.count(token))
        throw SchemaError("vocab: duplicate token '" + token + "'");
      v.add(token);
    }
    ++line_no;
    pos = end + 1;
  }
  if (line_no < 4) throw SchemaError("vocab: missing special-token header");
  return v;
}

inline Vocab load_vocab(const std::filesystem::path& path) {
  return parse_vocab(detail::read_file(path));
}

}  // namespace idiomark
