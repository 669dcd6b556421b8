#pragma once

// Converter from exported per-class trial matrices to the record-per-file
// interchange layout (manifest.csv + one `ch1,ch2` CSV per record).
//
// Input: CSV matrices, one per class and channel, rows = trials and
// columns = samples, no header. Two ways to describe them:
//
//  * index.csv at the input root with header `file,label,channel,subject,session`
//    (plus an optional `sample_rate` column). `label` is C/T/L/H/P/S or a class
//    name; `channel` is 1 or 2; `file` is relative to the input root.
//  * no index: files named `<class>_ch1.csv` / `<class>_ch2.csv` where <class>
//    is a label letter or one of cyl, tip, lat, hook, palm, spher. Files in a
//    subdirectory `<subject>/` or `<subject>/<session>/` take their ids from the
//    path; files at the root belong to subject "1", session "1".
//
// Output records are named `<subject>_<session>_<label>_<trial>.csv`.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "emg/csv.hpp"
#include "emg/dataset.hpp"
#include "emg/errors.hpp"
#include "emg/labels.hpp"

namespace emg {

namespace fs = std::filesystem;

inline constexpr const char* kConvertIndexFile = "index.csv";
inline const std::array<std::string, 5> kConvertIndexColumns = {"file", "label", "channel", "subject",
                                                                 "session"};

/// Label letter or the class names used by the original distribution.
inline std::optional<ClassLabel> parse_class_name(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  static const std::map<std::string, ClassLabel, std::less<>> names = {
      {"c", ClassLabel::Cylindrical}, {"cyl", ClassLabel::Cylindrical}, {"cylindrical", ClassLabel::Cylindrical},
      {"t", ClassLabel::Tip},         {"tip", ClassLabel::Tip},
      {"l", ClassLabel::Lateral},     {"lat", ClassLabel::Lateral},     {"lateral", ClassLabel::Lateral},
      {"h", ClassLabel::Hook},        {"hook", ClassLabel::Hook},
      {"p", ClassLabel::Palmar},      {"palm", ClassLabel::Palmar},     {"palmar", ClassLabel::Palmar},
      {"s", ClassLabel::Spherical},   {"spher", ClassLabel::Spherical}, {"spherical", ClassLabel::Spherical}};
  const auto it = names.find(lower);
  if (it == names.end())
    return std::nullopt;
  return it->second;
}

struct MatrixSource {
  fs::path file;
  ClassLabel label = ClassLabel::Cylindrical;
  int channel = 1;
  std::string subject = "1";
  std::string session = "1";
  double sample_rate = 500.0;
};

/// Rows of a trial matrix; every row must have the same number of finite values.
inline std::vector<std::vector<double>> read_matrix_csv(const fs::path& path) {
  const auto lines = csv::read_lines(path.string());
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (csv::trim(lines[i]).empty())
      throw DataError(path.string(), i + 1, "blank row inside matrix");
    std::vector<double> row;
    for (auto cell : csv::split(lines[i])) {
      double v;
      if (!csv::parse_double(cell, v))
        throw DataError(path.string(), i + 1, "non-numeric or non-finite value '" + std::string(cell) + "'");
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw DataError(path.string(), i + 1,
                      "row has " + std::to_string(row.size()) + " samples, expected " +
                          std::to_string(rows.front().size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty())
    throw DataError(path.string() + ": empty matrix");
  return rows;
}

inline std::vector<MatrixSource> read_convert_index(const fs::path& root) {
  const auto path = (root / kConvertIndexFile).string();
  const auto lines = csv::read_lines(path);
  if (lines.empty())
    throw DataError(path + ": empty index");
  std::map<std::string, std::size_t> col;
  const auto header = csv::split(lines[0]);
  for (std::size_t i = 0; i < header.size(); ++i)
    col[std::string(csv::trim(header[i]))] = i;
  for (const auto& c : kConvertIndexColumns)
    if (!col.contains(c))
      throw DataError(path + ": index is missing column '" + c + "'");
  const bool has_rate = col.contains("sample_rate");

  std::vector<MatrixSource> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = csv::split(lines[i]);
    if (cells.size() != header.size())
      throw DataError(path, i + 1, "expected " + std::to_string(header.size()) + " cells");
    const auto cell = [&](const char* name) { return std::string(csv::trim(cells[col.at(name)])); };
    MatrixSource s;
    const auto file = cell("file");
    if (file.empty() || fs::path(file).is_absolute() || file.find("..") != std::string::npos)
      throw DataError(path, i + 1, "file must be a relative path inside the input directory");
    s.file = root / file;
    const auto label = parse_class_name(cell("label"));
    if (!label)
      throw DataError(path, i + 1, "unknown label '" + cell("label") + "'");
    s.label = *label;
    const auto ch = cell("channel");
    if (ch != "1" && ch != "2")
      throw DataError(path, i + 1, "channel must be 1 or 2, got '" + ch + "'");
    s.channel = ch == "1" ? 1 : 2;
    s.subject = cell("subject");
    s.session = cell("session");
    if (s.subject.empty() || s.session.empty())
      throw DataError(path, i + 1, "subject and session must be non-empty");
    if (has_rate && !csv::parse_double(cell("sample_rate"), s.sample_rate))
      throw DataError(path, i + 1, "invalid sample_rate");
    if (!(s.sample_rate > 0.0))
      throw DataError(path, i + 1, "sample_rate must be > 0");
    out.push_back(std::move(s));
  }
  return out;
}

/// Finds `<class>_ch<k>.csv` files up to two directory levels below `root`.
inline std::vector<MatrixSource> discover_matrices(const fs::path& root, double sample_rate) {
  std::vector<MatrixSource> out;
  for (auto it = fs::recursive_directory_iterator(root); it != fs::recursive_directory_iterator(); ++it) {
    if (it.depth() > 2) {
      it.disable_recursion_pending();
      continue;
    }
    if (!it->is_regular_file() || it->path().extension() != ".csv")
      continue;
    const std::string stem = it->path().stem().string();
    const auto us = stem.rfind("_ch");
    if (us == std::string::npos || us + 4 != stem.size() || (stem.back() != '1' && stem.back() != '2'))
      continue;
    const auto label = parse_class_name(stem.substr(0, us));
    if (!label)
      continue;
    MatrixSource s;
    s.file = it->path();
    s.label = *label;
    s.channel = stem.back() - '0';
    s.sample_rate = sample_rate;
    const auto rel = fs::relative(it->path().parent_path(), root);
    std::vector<std::string> parts;
    for (const auto& p : rel)
      if (p != ".")
        parts.push_back(p.string());
    if (!parts.empty())
      s.subject = parts[0];
    if (parts.size() > 1)
      s.session = parts[1];
    out.push_back(std::move(s));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.file < b.file; });
  return out;
}

/// Identifier safe for use in a file name.
inline std::string file_token(const std::string& s) {
  std::string out;
  for (unsigned char c : s)
    out += std::isalnum(c) || c == '-' ? static_cast<char>(c) : '-';
  return out;
}

/// Builds the dataset described by `input` without writing anything.
inline Dataset convert_matrices(const fs::path& input, double sample_rate = 500.0) {
  if (!fs::is_directory(input))
    throw DataError("input directory not found: " + input.string());
  if (fs::exists(input / "manifest.csv"))
    throw ConfigError(input.string() + " already holds an interchange dataset (manifest.csv); nothing to convert");
  const auto sources = fs::exists(input / kConvertIndexFile) ? read_convert_index(input)
                                                             : discover_matrices(input, sample_rate);
  if (sources.empty())
    throw DataError("no class matrices found in " + input.string());

  // (subject, session, label) -> channel matrices
  using Key = std::tuple<std::string, std::string, std::size_t>;
  std::map<Key, std::array<const MatrixSource*, 2>> groups;
  for (const auto& s : sources) {
    auto& slot = groups[{s.subject, s.session, index_of(s.label)}][s.channel - 1];
    if (slot)
      throw DataError("duplicate matrix for subject " + s.subject + ", session " + s.session + ", class " +
                      to_char(s.label) + ", channel " + std::to_string(s.channel) + ": " +
                      slot->file.string() + " and " + s.file.string());
    slot = &s;
  }

  Dataset d;
  d.name = input.filename().string();
  for (const auto& [key, pair] : groups) {
    const auto& [subject, session, label] = key;
    for (int ch = 0; ch < 2; ++ch)
      if (!pair[ch])
        throw DataError("subject " + subject + ", session " + session + ", class " +
                        kLabelChars[label] + ": channel " + std::to_string(ch + 1) + " matrix is missing");
    if (pair[0]->sample_rate != pair[1]->sample_rate)
      throw DataError(pair[0]->file.string() + ": channels disagree on sample_rate");
    const auto m1 = read_matrix_csv(pair[0]->file);
    const auto m2 = read_matrix_csv(pair[1]->file);
    if (m1.size() != m2.size() || m1.front().size() != m2.front().size())
      throw DataError(pair[1]->file.string() + ": shape " + std::to_string(m2.size()) + "x" +
                      std::to_string(m2.front().size()) + " differs from channel 1 (" +
                      std::to_string(m1.size()) + "x" + std::to_string(m1.front().size()) + ")");
    for (std::size_t t = 0; t < m1.size(); ++t) {
      EmgRecord r;
      r.channel1 = m1[t];
      r.channel2 = m2[t];
      r.sample_rate = pair[0]->sample_rate;
      r.label = label_from_index(label);
      r.subject_id = subject;
      r.session_id = session;
      char trial[16];
      std::snprintf(trial, sizeof trial, "%03zu", t + 1);
      r.file = file_token(subject) + "_" + file_token(session) + "_" + kLabelChars[label] + "_" + trial + ".csv";
      d.records.push_back(std::move(r));
    }
  }
  validate_dataset(d);
  return d;
}

/// Converts `input` into `output`. Refuses to overwrite an existing dataset.
inline Dataset convert_directory(const fs::path& input, const fs::path& output, double sample_rate = 500.0) {
  if (fs::exists(output / "manifest.csv"))
    throw ConfigError(output.string() + " already contains manifest.csv; refusing to overwrite");
  auto d = convert_matrices(input, sample_rate);
  write_dataset(d, output);
  return d;
}

} // namespace emg
