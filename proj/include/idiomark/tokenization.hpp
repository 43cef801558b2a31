#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "idiomark/errors.hpp"

namespace idiomark {

struct SpecialIds {
  int pad = 0;
  int unk = 1;
  int cls = 2;
  int sep = 3;
};

/// Token ids for one example. ids[0] is always the CLS id; mwe_token_range,
/// when present, is the inclusive [first, last] index pair of the tokens
/// strictly between the two SEP markers.
struct TokenizedInput {
  std::vector<int> ids;
  std::vector<std::uint8_t> attention_mask;
  std::optional<std::pair<int, int>> mwe_token_range;
};

/// What the rest of the system is allowed to know about a tokenizer. Real
/// pre-trained tokenizers plug in behind this same surface.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual TokenizedInput tokenize(std::string_view text,
                                  int max_tokens) const = 0;
  virtual int vocab_size() const = 0;
  virtual SpecialIds specials() const = 0;
  virtual std::vector<std::string> detokenize(
      const std::vector<int>& ids) const = 0;

  // Content-token count with truncation disabled (CLS excluded).
  int count_tokens(std::string_view text) const {
    const auto t = tokenize(text, kNoTruncation);
    return static_cast<int>(t.ids.size()) - 1;
  }

  static constexpr int kNoTruncation = 1 << 30;
};

}  // namespace idiomark
