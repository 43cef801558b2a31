#pragma once

#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "idiomark/corpus.hpp"
#include "idiomark/errors.hpp"
#include "idiomark/predictions.hpp"
#include "idiomark/textutil.hpp"

namespace idiomark {

/// Normalized MWE -> the single label it carries throughout training.
using OverrideTable = std::map<std::string, int>;

inline std::string normalize_mwe(std::string_view s) {
  return to_lower(collapse_whitespace(s));
}

/// Collects MWEs whose training labels are unanimous. Feed it whatever
/// training pool the prediction run used (for one-shot runs, typically the
/// combined zero-shot + one-shot data).
inline OverrideTable build_override_table(const Dataset& train) {
  std::map<std::string, std::pair<int, bool>> seen;  // label, unanimous
  for (const Instance& inst : train.instances) {
    if (!inst.label)
      throw ValidationError("build_override_table: unlabeled row '" +
                            inst.id + "'");
    const std::string key = normalize_mwe(inst.mwe);
    auto [it, fresh] = seen.emplace(key, std::make_pair(*inst.label, true));
    if (!fresh && it->second.first != *inst.label) it->second.second = false;
  }
  OverrideTable table;
  for (const auto& [key, v] : seen)
    if (v.second) table.emplace(key, v.first);
  return table;
}

/// Forces the table label onto every matching prediction and flags it;
/// probabilities are left untouched, so the rule is auditable and
/// idempotent.
inline PredictionSet apply_overrides(PredictionSet preds,
                                     const OverrideTable& table) {
  for (Prediction& p : preds.items) {
    const auto it = table.find(normalize_mwe(p.mwe));
    if (it == table.end()) continue;
    p.label = it->second;
    p.overridden = true;
  }
  return preds;
}

/// Two-column audit format: mwe<TAB>label.
inline std::string serialize_override_table(const OverrideTable& table) {
  std::ostringstream out;
  for (const auto& [mwe, label] : table) out << mwe << '\t' << label << "\n";
  return out.str();
}

inline void save_override_table(const OverrideTable& table,
                                const std::filesystem::path& path) {
  detail::write_file_atomic(path, serialize_override_table(table));
}

inline OverrideTable load_override_table(const std::filesystem::path& path) {
  const std::string text = detail::read_file(path);
  OverrideTable table;
  size_t pos = 0;
  size_t line_no = 0;
  while (pos < text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string_view line{text.data() + pos, end - pos};
    ++line_no;
    pos = end + 1;
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string_view::npos)
      throw SchemaError("override table: missing tab at line " +
                        std::to_string(line_no));
    const std::string label(trim(line.substr(tab + 1)));
    if (label != "0" && label != "1")
      throw ValidationError("override table: non-binary label at line " +
                            std::to_string(line_no));
    table.emplace(std::string(line.substr(0, tab)), label == "0" ? 0 : 1);
  }
  return table;
}

}  // namespace idiomark
