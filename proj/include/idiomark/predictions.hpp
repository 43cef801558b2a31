#pragma once

#include <array>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "idiomark/corpus.hpp"
#include "idiomark/errors.hpp"

namespace idiomark {

/// Argmax with the exact-tie convention: 0.5/0.5 resolves to label 1
/// (literal), the safer call for proper-noun-like cases.
inline int argmax_label(const std::array<double, 2>& p) {
  return p[0] > p[1] ? 0 : 1;
}

struct Prediction {
  std::string id;
  Language language = Language::EN;
  Setting setting = Setting::ZeroShot;
  std::string mwe;
  std::array<double, 2> probabilities{0.0, 0.0};
  int label = 1;
  bool overridden = false;
};

struct PredictionSet {
  std::vector<Prediction> items;

  size_t size() const { return items.size(); }
};

/// Submission-shaped CSV: ID,Language,Setting,Label.
inline std::string serialize_predictions(const PredictionSet& ps) {
  std::ostringstream out;
  out << "ID,Language,Setting,Label\n";
  for (const Prediction& p : ps.items) {
    out << detail::escape_field(p.id, ',') << ',' << to_string(p.language)
        << ',' << to_string(p.setting) << ',' << p.label << "\n";
  }
  return out.str();
}

/// Sidecar with the information the submission format drops: probabilities
/// and whether the post-processing rule fired.
inline std::string serialize_prediction_details(const PredictionSet& ps) {
  std::ostringstream out;
  out << "ID\tMWE\tProb0\tProb1\tOverridden\n";
  char buf[64];
  for (const Prediction& p : ps.items) {
    out << p.id << '\t' << p.mwe << '\t';
    std::snprintf(buf, sizeof buf, "%.17g", p.probabilities[0]);
    out << buf << '\t';
    std::snprintf(buf, sizeof buf, "%.17g", p.probabilities[1]);
    out << buf << '\t' << (p.overridden ? 1 : 0) << "\n";
  }
  return out.str();
}

inline void save_predictions(const PredictionSet& ps,
                             const std::filesystem::path& path) {
  detail::write_file_atomic(path, serialize_predictions(ps));
  detail::write_file_atomic(path.string() + ".details.tsv",
                            serialize_prediction_details(ps));
}

/// Reads the submission CSV back. Probabilities are reconstructed as hard
/// 0/1 so the argmax invariant holds; the details sidecar is not required.
inline PredictionSet load_predictions(const std::filesystem::path& path) {
  const std::string text = detail::read_file(path);
  const auto rows = detail::parse_delimited(text, ',');
  if (rows.empty()) throw SchemaError("predictions: empty file");
  const std::vector<std::string> expect = {"ID", "Language", "Setting",
                                           "Label"};
  if (rows[0].size() < expect.size())
    throw SchemaError("predictions: missing header columns");
  for (size_t i = 0; i < expect.size(); ++i)
    if (trim(rows[0][i]) != expect[i])
      throw SchemaError("predictions: expected column '" + expect[i] +
                        "', found '" + rows[0][i] + "'");
  PredictionSet ps;
  for (size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() < 4)
      throw SchemaError("predictions: short row " + std::to_string(r));
    Prediction p;
    p.id = row[0];
    p.language = parse_language(row[1], p.id);
    p.setting = parse_setting(row[2], p.id);
    const std::string lab = trim(row[3]);
    if (lab == "0")
      p.label = 0;
    else if (lab == "1")
      p.label = 1;
    else
      throw ValidationError("predictions: row '" + p.id +
                            "': non-binary label '" + lab + "'");
    p.probabilities = p.label == 0 ? std::array<double, 2>{1.0, 0.0}
                                   : std::array<double, 2>{0.0, 1.0};
    ps.items.push_back(std::move(p));
  }
  return ps;
}

}  // namespace idiomark
