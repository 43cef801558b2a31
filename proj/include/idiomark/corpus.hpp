#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "idiomark/errors.hpp"
#include "idiomark/textutil.hpp"

namespace idiomark {

enum class Language { EN, PT, GL };
enum class Setting { ZeroShot, OneShot };

inline std::string to_string(Language l) {
  switch (l) {
    case Language::EN: return "EN";
    case Language::PT: return "PT";
    default: return "GL";
  }
}

inline std::string to_string(Setting s) {
  return s == Setting::ZeroShot ? "zero_shot" : "one_shot";
}

inline Language parse_language(std::string_view s, std::string_view row_id) {
  if (s == "EN") return Language::EN;
  if (s == "PT") return Language::PT;
  if (s == "GL") return Language::GL;
  throw ValidationError("row '" + std::string(row_id) +
                        "': unknown language '" + std::string(s) + "'");
}

inline Setting parse_setting(std::string_view s, std::string_view row_id) {
  if (s == "zero_shot") return Setting::ZeroShot;
  if (s == "one_shot") return Setting::OneShot;
  throw ValidationError("row '" + std::string(row_id) +
                        "': unknown setting '" + std::string(s) + "'");
}

/// One row of the task data. label: 0 = idiomatic, 1 = literal; absent for
/// unlabeled test rows.
struct Instance {
  std::string id;
  Language language = Language::EN;
  std::string mwe;
  Setting setting = Setting::ZeroShot;
  std::string previous;
  std::string target;
  std::string next;
  std::optional<int> label;
};

struct Dataset {
  std::vector<Instance> instances;
  std::string provenance;
  // Whether the source file carried a Label column; serialization keeps it.
  bool label_column = false;

  size_t size() const { return instances.size(); }
  bool empty() const { return instances.empty(); }
};

namespace detail {

// RFC-4180 style reader: quoted fields, doubled quotes, embedded newlines,
// delimiter either ',' or '\t'.
inline std::vector<std::vector<std::string>> parse_delimited(
    std::string_view text, char delim) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  size_t i = 0;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
  };
  while (i < text.size()) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"' && !field_started && field.empty()) {
      in_quotes = true;
      field_started = true;
    } else if (c == delim) {
      end_field();
    } else if (c == '\n') {
      if (!field.empty() && field.back() == '\r') field.pop_back();
      end_row();
    } else {
      field.push_back(c);
      field_started = true;
    }
    ++i;
  }
  if (in_quotes) throw SchemaError("unterminated quoted field");
  if (!field.empty() || !row.empty()) end_row();
  return rows;
}

inline std::string escape_field(const std::string& f, char delim) {
  const bool needs_quotes =
      f.find(delim) != std::string::npos || f.find('"') != std::string::npos ||
      f.find('\n') != std::string::npos || f.find('\r') != std::string::npos;
  if (!needs_quotes) return f;
  std::string out = "\"";
  for (char c : f) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Write-then-rename so partially written outputs are never observed.
inline void write_file_atomic(const std::filesystem::path& path,
                              const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open file for writing: " + tmp.string());
    out << content;
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

/// Load the eight-column task format. The delimiter (comma or tab) is
/// sniffed from the header line. With expect_labels=false the Label column
/// may be absent or empty.
inline Dataset load_dataset(const std::filesystem::path& path,
                            bool expect_labels) {
  std::string text = detail::read_file(path);
  // Strip a UTF-8 BOM if present.
  if (text.size() >= 3 && text.compare(0, 3, "\xef\xbb\xbf") == 0)
    text.erase(0, 3);
  const size_t header_end = text.find('\n');
  const std::string_view header_line =
      std::string_view(text).substr(0, header_end);
  const char delim =
      header_line.find('\t') != std::string_view::npos ? '\t' : ',';

  const auto rows = detail::parse_delimited(text, delim);
  if (rows.empty()) throw SchemaError("empty file: " + path.string());

  const std::vector<std::string>& header = rows.front();
  std::map<std::string, size_t> col;
  for (size_t i = 0; i < header.size(); ++i) col[trim(header[i])] = i;

  const char* required[] = {"DataID", "Language", "MWE",   "Setting",
                            "Previous", "Target", "Next"};
  for (const char* name : required) {
    if (!col.count(name))
      throw SchemaError("missing required column '" + std::string(name) +
                        "' in " + path.string());
  }
  const bool has_label = col.count("Label") > 0;
  if (expect_labels && !has_label)
    throw SchemaError("missing required column 'Label' in " + path.string());

  Dataset ds;
  ds.provenance = path.string();
  ds.label_column = has_label;
  auto field = [&](const std::vector<std::string>& row,
                   const char* name) -> std::string {
    const size_t idx = col.at(name);
    return idx < row.size() ? row[idx] : std::string();
  };
  for (size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() == 1 && row[0].empty()) continue;  // trailing blank line
    Instance inst;
    inst.id = field(row, "DataID");
    inst.language = parse_language(field(row, "Language"), inst.id);
    inst.mwe = field(row, "MWE");
    inst.setting = parse_setting(field(row, "Setting"), inst.id);
    inst.previous = field(row, "Previous");
    inst.target = field(row, "Target");
    inst.next = field(row, "Next");
    if (inst.target.empty())
      throw ValidationError("row '" + inst.id + "': empty Target");
    if (has_label) {
      const std::string raw = trim(field(row, "Label"));
      if (raw.empty()) {
        if (expect_labels)
          throw ValidationError("row '" + inst.id + "': missing label");
      } else if (raw == "0") {
        inst.label = 0;
      } else if (raw == "1") {
        inst.label = 1;
      } else {
        throw ValidationError("row '" + inst.id + "': non-binary label '" +
                              raw + "'");
      }
    }
    ds.instances.push_back(std::move(inst));
  }
  return ds;
}

inline std::string serialize_dataset(const Dataset& ds, char delim = ',') {
  std::ostringstream out;
  const std::string d(1, delim);
  out << "DataID" << d << "Language" << d << "MWE" << d << "Setting" << d
      << "Previous" << d << "Target" << d << "Next";
  if (ds.label_column) out << d << "Label";
  out << "\n";
  for (const Instance& i : ds.instances) {
    out << detail::escape_field(i.id, delim) << d << to_string(i.language)
        << d << detail::escape_field(i.mwe, delim) << d
        << to_string(i.setting) << d << detail::escape_field(i.previous, delim)
        << d << detail::escape_field(i.target, delim) << d
        << detail::escape_field(i.next, delim);
    if (ds.label_column) {
      out << d;
      if (i.label) out << *i.label;
    }
    out << "\n";
  }
  return out.str();
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& path,
                         char delim = ',') {
  detail::write_file_atomic(path, serialize_dataset(ds, delim));
}

/// Exhaustive, disjoint partition by the Setting column; row order kept.
inline std::pair<Dataset, Dataset> split_by_setting(const Dataset& d) {
  Dataset zero, one;
  zero.provenance = d.provenance;
  one.provenance = d.provenance;
  zero.label_column = d.label_column;
  one.label_column = d.label_column;
  for (const Instance& i : d.instances) {
    (i.setting == Setting::ZeroShot ? zero : one).instances.push_back(i);
  }
  return {std::move(zero), std::move(one)};
}

}  // namespace idiomark
