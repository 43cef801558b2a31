#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "idiomark/corpus.hpp"
#include "idiomark/errors.hpp"
#include "idiomark/preprocess.hpp"
#include "idiomark/tokenization.hpp"

namespace idiomark {

/// Token-length statistics over target sentences plus first-MWE-token
/// positions, in the given tokenizer's units. Positions are 0-based content
/// token indices; rows whose MWE never occurs in the target are skipped for
/// the position stats.
struct LengthStats {
  double mean = 0.0;
  double median = 0.0;
  int max = 0;
  int p90 = 0;
  double mwe_position_mean = 0.0;
  double mwe_position_median = 0.0;
  int mwe_position_max = 0;
  int mwe_position_p90 = 0;
  size_t rows = 0;
  size_t rows_with_mwe_position = 0;
};

namespace detail {

struct SummaryStats {
  double mean = 0.0, median = 0.0;
  int max = 0, p90 = 0;
};

inline SummaryStats summarize(std::vector<int> values) {
  SummaryStats s;
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  double sum = 0.0;
  for (int v : values) sum += v;
  s.mean = sum / static_cast<double>(n);
  s.median =
      (n % 2 == 1) ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  s.max = values.back();
  // Nearest-rank 90th percentile.
  const size_t rank =
      static_cast<size_t>(std::ceil(0.9 * static_cast<double>(n)));
  s.p90 = values[std::min(n - 1, rank == 0 ? 0 : rank - 1)];
  return s;
}

}  // namespace detail

inline LengthStats length_statistics(const Dataset& d, const Tokenizer& tok) {
  if (d.empty()) throw ValidationError("length_statistics: empty dataset");
  std::vector<int> lengths;
  std::vector<int> positions;
  lengths.reserve(d.size());
  for (const Instance& inst : d.instances) {
    lengths.push_back(tok.count_tokens(inst.target));
    const int pos = first_mwe_token_position(inst, tok);
    if (pos >= 0) positions.push_back(pos);
  }
  const auto ls = detail::summarize(lengths);
  const auto ps = detail::summarize(positions);
  LengthStats out;
  out.mean = ls.mean;
  out.median = ls.median;
  out.max = ls.max;
  out.p90 = ls.p90;
  out.mwe_position_mean = ps.mean;
  out.mwe_position_median = ps.median;
  out.mwe_position_max = ps.max;
  out.mwe_position_p90 = ps.p90;
  out.rows = lengths.size();
  out.rows_with_mwe_position = positions.size();
  return out;
}

}  // namespace idiomark
