#pragma once

#include <array>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "idiomark/corpus.hpp"
#include "idiomark/errors.hpp"
#include "idiomark/predictions.hpp"

namespace idiomark {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int64_t support = 0;
};

struct EvalReport {
  std::array<ClassMetrics, 2> per_class;
  double macro_f1 = 0.0;
  // confusion[gold][pred]
  std::array<std::array<int64_t, 2>, 2> confusion{};
  int64_t scored = 0;
};

/// Per-class F1 with the zero-denominator convention (empty denominator ->
/// 0), macro-averaged over both classes unweighted.
inline EvalReport compute_report(const std::vector<int>& gold,
                                 const std::vector<int>& pred) {
  if (gold.size() != pred.size())
    throw ContractError("compute_report: gold/pred length mismatch");
  if (gold.empty()) throw ContractError("compute_report: empty input");
  EvalReport r;
  for (size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] < 0 || gold[i] > 1 || pred[i] < 0 || pred[i] > 1)
      throw ValidationError("compute_report: label outside {0,1}");
    ++r.confusion[gold[i]][pred[i]];
  }
  r.scored = static_cast<int64_t>(gold.size());
  for (int c = 0; c < 2; ++c) {
    const int64_t tp = r.confusion[c][c];
    const int64_t fp = r.confusion[1 - c][c];
    const int64_t fn = r.confusion[c][1 - c];
    ClassMetrics& m = r.per_class[c];
    m.support = tp + fn;
    m.precision = (tp + fp) > 0 ? double(tp) / double(tp + fp) : 0.0;
    m.recall = (tp + fn) > 0 ? double(tp) / double(tp + fn) : 0.0;
    m.f1 = (m.precision + m.recall) > 0.0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
  }
  r.macro_f1 = (r.per_class[0].f1 + r.per_class[1].f1) / 2.0;
  return r;
}

inline double macro_f1(const std::vector<int>& gold,
                       const std::vector<int>& pred) {
  return compute_report(gold, pred).macro_f1;
}

enum class GroupBy { None, Language, Setting };

struct EvalResult {
  EvalReport overall;
  std::vector<std::pair<std::string, EvalReport>> groups;
};

/// Joins predictions to gold rows by id; optional grouping adds one report
/// per group value alongside the overall report.
inline EvalResult evaluate(const PredictionSet& preds, const Dataset& gold,
                           GroupBy group_by = GroupBy::None) {
  struct GoldRow {
    int label;
    Language language;
    Setting setting;
  };
  std::unordered_map<std::string, GoldRow> by_id;
  by_id.reserve(gold.size());
  for (const Instance& inst : gold.instances) {
    if (!inst.label)
      throw ValidationError("evaluate: gold row '" + inst.id +
                            "' has no label");
    by_id.emplace(inst.id, GoldRow{*inst.label, inst.language, inst.setting});
  }
  std::vector<int> g, p;
  g.reserve(preds.size());
  p.reserve(preds.size());
  std::map<std::string, std::pair<std::vector<int>, std::vector<int>>> grouped;
  std::string missing;
  size_t missing_count = 0;
  for (const Prediction& pr : preds.items) {
    const auto it = by_id.find(pr.id);
    if (it == by_id.end()) {
      ++missing_count;
      if (missing.size() < 200) {
        if (!missing.empty()) missing += ", ";
        missing += pr.id;
      }
      continue;
    }
    g.push_back(it->second.label);
    p.push_back(pr.label);
    if (group_by != GroupBy::None) {
      const std::string key = group_by == GroupBy::Language
                                  ? to_string(it->second.language)
                                  : to_string(it->second.setting);
      grouped[key].first.push_back(it->second.label);
      grouped[key].second.push_back(pr.label);
    }
  }
  if (missing_count > 0)
    throw ValidationError("evaluate: " + std::to_string(missing_count) +
                          " prediction ids missing from gold: " + missing);
  if (g.empty()) throw ValidationError("evaluate: nothing to score");

  EvalResult result;
  result.overall = compute_report(g, p);
  for (const auto& [key, gp] : grouped)
    result.groups.emplace_back(key, compute_report(gp.first, gp.second));
  return result;
}

inline std::string format_report(const EvalReport& r,
                                 const std::string& title) {
  std::ostringstream out;
  char buf[160];
  out << title << " (n=" << r.scored << ")\n";
  std::snprintf(buf, sizeof buf, "  %-12s %9s %9s %9s %9s\n", "class",
                "precision", "recall", "f1", "support");
  out << buf;
  const char* names[2] = {"idiomatic", "literal"};
  for (int c = 0; c < 2; ++c) {
    const ClassMetrics& m = r.per_class[c];
    std::snprintf(buf, sizeof buf, "  %d %-10s %9.4f %9.4f %9.4f %9lld\n", c,
                  names[c], m.precision, m.recall, m.f1,
                  static_cast<long long>(m.support));
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "  macro F1 %.4f\n", r.macro_f1);
  out << buf;
  std::snprintf(buf, sizeof buf,
                "  confusion [gold x pred]: [[%lld, %lld], [%lld, %lld]]\n",
                static_cast<long long>(r.confusion[0][0]),
                static_cast<long long>(r.confusion[0][1]),
                static_cast<long long>(r.confusion[1][0]),
                static_cast<long long>(r.confusion[1][1]));
  out << buf;
  return out.str();
}

inline std::string format_result(const EvalResult& res) {
  std::string out = format_report(res.overall, "overall");
  for (const auto& [key, rep] : res.groups) out += format_report(rep, key);
  return out;
}

/// One-line structured record, for machine-readable harness logs.
inline std::string report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["macro_f1"] = r.macro_f1;
  j["scored"] = r.scored;
  for (int c = 0; c < 2; ++c) {
    nlohmann::ordered_json cj;
    cj["precision"] = r.per_class[c].precision;
    cj["recall"] = r.per_class[c].recall;
    cj["f1"] = r.per_class[c].f1;
    cj["support"] = r.per_class[c].support;
    j[c == 0 ? "class0" : "class1"] = std::move(cj);
  }
  j["confusion"] = r.confusion;
  return j.dump();
}

}  // namespace idiomark
