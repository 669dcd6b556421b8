#pragma once

// Two-channel sEMG records and the on-disk interchange layout:
//
//   <dir>/manifest.csv   header `file,label,subject,session,sample_rate`
//   <dir>/<file>         one row per sample, `ch1,ch2`, no header
//
// Labels are the single characters C/T/L/H/P/S (indices 0..5).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "emg/csv.hpp"
#include "emg/errors.hpp"
#include "emg/labels.hpp"

namespace emg {

namespace fs = std::filesystem;

struct EmgRecord {
  std::vector<double> channel1;
  std::vector<double> channel2;
  double sample_rate = 500.0;
  ClassLabel label = ClassLabel::Cylindrical;
  std::string subject_id;
  std::string session_id;
  /// File name inside the dataset directory; empty for in-memory records.
  std::string file;

  std::size_t length() const noexcept { return channel1.size(); }
  bool operator==(const EmgRecord&) const = default;
};

struct Dataset {
  std::vector<EmgRecord> records;
  std::string name;

  std::size_t size() const noexcept { return records.size(); }
  std::array<std::size_t, kNumClasses> class_counts() const {
    std::array<std::size_t, kNumClasses> counts{};
    for (const auto& r : records)
      ++counts[index_of(r.label)];
    return counts;
  }
};

struct SplitPlan {
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
  std::uint64_t seed = 0;
  double train_fraction = 0.7;
};

inline const std::array<std::string, 5> kManifestColumns = {"file", "label", "subject", "session",
                                                            "sample_rate"};

inline std::string record_name(const EmgRecord& r, std::size_t index) {
  return r.file.empty() ? "record #" + std::to_string(index) : r.file;
}

/// Throws DataError if the record breaks a record invariant.
inline void validate_record(const EmgRecord& r, const std::string& where) {
  if (r.channel1.size() != r.channel2.size())
    throw DataError(where + ": channel lengths differ (ch1=" + std::to_string(r.channel1.size()) +
                    ", ch2=" + std::to_string(r.channel2.size()) + ")");
  if (r.channel1.empty())
    throw DataError(where + ": empty record");
  if (!(r.sample_rate > 0.0) || !std::isfinite(r.sample_rate))
    throw DataError(where + ": sample rate must be positive");
  for (const auto* ch : {&r.channel1, &r.channel2})
    for (double v : *ch)
      if (!std::isfinite(v))
        throw DataError(where + ": non-finite sample");
}

inline void validate_dataset(const Dataset& d) {
  if (d.records.empty())
    throw DataError("no records found");
  const auto& first = d.records.front();
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    const auto& r = d.records[i];
    validate_record(r, record_name(r, i));
    if (r.sample_rate != first.sample_rate)
      throw DataError(record_name(r, i) + ": sample rate differs from the rest of the dataset");
    if (r.length() != first.length())
      throw DataError(record_name(r, i) + ": length " + std::to_string(r.length()) +
                      " differs from the rest of the dataset (" + std::to_string(first.length()) +
                      ")");
  }
}

/// Reads one `ch1,ch2` record file. Metadata other than the samples is left default.
inline EmgRecord read_record_csv(const std::string& path) {
  EmgRecord r;
  const auto lines = csv::read_lines(path);
  bool ch1_done = false;
  bool ch2_done = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto cells = csv::split(lines[i]);
    if (cells.size() == 1)
      cells.emplace_back();
    if (cells.size() != 2)
      throw DataError(path, i + 1, "expected 2 columns, found " + std::to_string(cells.size()));
    for (int c = 0; c < 2; ++c) {
      auto& done = c == 0 ? ch1_done : ch2_done;
      auto& ch = c == 0 ? r.channel1 : r.channel2;
      if (cells[c].empty()) {
        done = true;
        continue;
      }
      if (done)
        throw DataError(path, i + 1, "gap in channel " + std::to_string(c + 1));
      double v;
      if (!csv::parse_double(cells[c], v))
        throw DataError(path, i + 1, "malformed or non-finite value '" + std::string(cells[c]) + "'");
      ch.push_back(v);
    }
  }
  if (r.channel1.empty() && r.channel2.empty())
    throw DataError(path + ": empty record");
  if (r.channel1.size() != r.channel2.size())
    throw DataError(path + ": channel lengths differ (ch1=" + std::to_string(r.channel1.size()) +
                    ", ch2=" + std::to_string(r.channel2.size()) + ")");
  return r;
}

inline void write_record_csv(const EmgRecord& r, const std::string& path) {
  auto out = csv::open_out(path);
  for (std::size_t n = 0; n < r.channel1.size(); ++n)
    out << csv::format_double(r.channel1[n]) << ',' << csv::format_double(r.channel2[n]) << '\n';
  if (!out)
    throw DataError("write failed: " + path);
}

/// Maps manifest header names to column positions; throws naming the first missing column.
inline std::map<std::string, std::size_t> manifest_columns(const std::string& path,
                                                           const std::string& header) {
  std::map<std::string, std::size_t> pos;
  const auto cells = csv::split(header);
  for (std::size_t i = 0; i < cells.size(); ++i)
    pos[std::string(cells[i])] = i;
  for (const auto& col : kManifestColumns)
    if (!pos.contains(col))
      throw DataError(path, 1, "manifest is missing column '" + col + "'");
  return pos;
}

inline Dataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir))
    throw DataError("not a directory: " + dir.string());
  const auto manifest = dir / "manifest.csv";
  if (!fs::exists(manifest))
    throw DataError("no records found in " + dir.string() + " (manifest.csv missing)");

  const auto mpath = manifest.string();
  const auto lines = csv::read_lines(mpath);
  if (lines.empty())
    throw DataError(mpath + ": empty manifest");
  const auto col = manifest_columns(mpath, lines[0]);

  Dataset d;
  d.name = dir.filename().string();
  if (d.name.empty())
    d.name = dir.parent_path().filename().string();
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (csv::trim(lines[i]).empty())
      continue;
    const auto cells = csv::split(lines[i]);
    if (cells.size() < col.size())
      throw DataError(mpath, i + 1, "expected " + std::to_string(col.size()) + " columns");
    const auto cell = [&](const std::string& name) { return cells[col.at(name)]; };

    const auto file = std::string(cell("file"));
    const auto label = parse_label(cell("label"));
    if (!label)
      throw DataError(mpath, i + 1, "unknown label '" + std::string(cell("label")) + "'");
    double rate;
    if (!csv::parse_double(cell("sample_rate"), rate) || rate <= 0.0)
      throw DataError(mpath, i + 1, "invalid sample_rate '" + std::string(cell("sample_rate")) + "'");
    if (file.empty() || file.find("..") != std::string::npos)
      throw DataError(mpath, i + 1, "invalid file name '" + file + "'");

    EmgRecord r = read_record_csv((dir / file).string());
    r.label = *label;
    r.sample_rate = rate;
    r.subject_id = std::string(cell("subject"));
    r.session_id = std::string(cell("session"));
    r.file = file;
    d.records.push_back(std::move(r));
  }
  validate_dataset(d);
  return d;
}

/// Writes the interchange layout. Records without a file name get `rec_NNNNN.csv`.
inline void write_dataset(const Dataset& d, const fs::path& dir) {
  validate_dataset(d);
  fs::create_directories(dir);
  auto manifest = csv::open_out((dir / "manifest.csv").string());
  manifest << "file,label,subject,session,sample_rate\n";
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    const auto& r = d.records[i];
    std::string file = r.file;
    if (file.empty()) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "rec_%05zu.csv", i);
      file = buf;
    }
    write_record_csv(r, (dir / file).string());
    manifest << file << ',' << to_char(r.label) << ',' << r.subject_id << ',' << r.session_id << ','
             << csv::format_double(r.sample_rate) << '\n';
  }
  if (!manifest)
    throw DataError("write failed: " + (dir / "manifest.csv").string());
}

/// Number of training records for a class of size n: the fractional
/// remainder goes to training, and both sides keep at least one record.
inline std::size_t stratum_train_count(std::size_t n, double fraction) {
  const double exact = fraction * static_cast<double>(n);
  auto k = static_cast<std::size_t>(std::ceil(exact - 1e-9));
  return std::clamp<std::size_t>(k, 1, n - 1);
}

/// Stratified split over a label sequence. Identical (labels, fraction, seed)
/// give identical plans.
inline SplitPlan split_labels(std::span<const ClassLabel> labels, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("train fraction must lie in (0, 1)");
  if (labels.empty())
    throw DataError("cannot split an empty dataset");

  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i)
    by_class[index_of(labels[i])].push_back(i);

  SplitPlan plan;
  plan.seed = seed;
  plan.train_fraction = fraction;
  std::mt19937_64 rng(seed);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    auto& idx = by_class[c];
    if (idx.empty())
      continue;
    if (idx.size() < 2)
      throw DataError(std::string("class ") + kLabelChars[c] +
                      " has fewer than 2 records; cannot stratify");
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t k = stratum_train_count(idx.size(), fraction);
    plan.train_indices.insert(plan.train_indices.end(), idx.begin(), idx.begin() + k);
    plan.test_indices.insert(plan.test_indices.end(), idx.begin() + k, idx.end());
  }
  std::sort(plan.train_indices.begin(), plan.train_indices.end());
  std::sort(plan.test_indices.begin(), plan.test_indices.end());
  return plan;
}

inline std::vector<ClassLabel> labels_of(const Dataset& d) {
  std::vector<ClassLabel> out;
  out.reserve(d.records.size());
  for (const auto& r : d.records)
    out.push_back(r.label);
  return out;
}

inline SplitPlan split_train_test(const Dataset& d, double fraction, std::uint64_t seed) {
  return split_labels(labels_of(d), fraction, seed);
}

/// split.csv: `index,file,label,part` with part in {train, test}. `names[i]`
/// identifies item i (a record file, or a row of a feature dump).
inline void write_split(const SplitPlan& plan, std::span<const ClassLabel> labels,
                        std::span<const std::string> names, const std::string& path) {
  auto out = csv::open_out(path);
  out << "index,file,label,part\n";
  std::vector<std::pair<std::size_t, const char*>> rows;
  for (auto i : plan.train_indices)
    rows.emplace_back(i, "train");
  for (auto i : plan.test_indices)
    rows.emplace_back(i, "test");
  std::sort(rows.begin(), rows.end());
  for (const auto& [i, part] : rows)
    out << i << ',' << names[i] << ',' << to_char(labels[i]) << ',' << part << '\n';
}

inline void write_split(const SplitPlan& plan, const Dataset& d, const std::string& path) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < d.records.size(); ++i)
    names.push_back(d.records[i].file.empty() ? record_name(d.records[i], i) : d.records[i].file);
  write_split(plan, labels_of(d), names, path);
}

struct SplitRow {
  std::size_t index = 0;
  std::string file;
  ClassLabel label = ClassLabel::Cylindrical;
  bool train = true;
};

inline std::vector<SplitRow> read_split_rows(const std::string& path) {
  const auto lines = csv::read_lines(path);
  if (lines.empty() || csv::split(lines[0]).size() != 4)
    throw DataError(path, 1, "expected header index,file,label,part");
  std::vector<SplitRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = csv::split(lines[i]);
    long long idx;
    if (cells.size() != 4 || !csv::parse_long(cells[0], idx) || idx < 0)
      throw DataError(path, i + 1, "malformed split row");
    SplitRow row;
    row.index = static_cast<std::size_t>(idx);
    row.file = std::string(cells[1]);
    const auto label = parse_label(cells[2]);
    if (!label)
      throw DataError(path, i + 1, "unknown label '" + std::string(cells[2]) + "'");
    row.label = *label;
    if (cells[3] == "train")
      row.train = true;
    else if (cells[3] == "test")
      row.train = false;
    else
      throw DataError(path, i + 1, "unknown part '" + std::string(cells[3]) + "'");
    rows.push_back(std::move(row));
  }
  return rows;
}

inline SplitPlan read_split(const std::string& path) {
  SplitPlan plan;
  for (const auto& row : read_split_rows(path))
    (row.train ? plan.train_indices : plan.test_indices).push_back(row.index);
  return plan;
}

inline Dataset subset(const Dataset& d, std::span<const std::size_t> indices) {
  Dataset out;
  out.name = d.name;
  out.records.reserve(indices.size());
  for (auto i : indices)
    out.records.push_back(d.records.at(i));
  return out;
}

/// Subset selector: `all`, `subject=<id>`, `session=<id>` or both joined by a comma.
inline Dataset select_subset(const Dataset& d, const std::string& selector) {
  if (selector.empty() || selector == "all")
    return d;
  std::string subject, session;
  for (auto part : csv::split(selector)) {
    const auto eq = part.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("invalid subset selector '" + selector + "'");
    const auto key = part.substr(0, eq);
    const auto value = std::string(part.substr(eq + 1));
    if (key == "subject")
      subject = value;
    else if (key == "session")
      session = value;
    else
      throw ConfigError("invalid subset key '" + std::string(key) + "'");
  }
  Dataset out;
  out.name = d.name + "[" + selector + "]";
  for (const auto& r : d.records)
    if ((subject.empty() || r.subject_id == subject) && (session.empty() || r.session_id == session))
      out.records.push_back(r);
  if (out.records.empty())
    throw DataError("subset '" + selector + "' selects no records");
  return out;
}

/// Per-class generator parameters for the synthetic stand-in dataset.
///
/// Each channel is an AR(2) process x[n] = 2 r cos(w) x[n-1] - r^2 x[n-2] + v[n]
/// with unit-variance Gaussian drive, observed with additive white noise.
/// Class c puts its channel-1 resonance at 30 + 36c Hz and its channel-2
/// resonance at 220 - 36c Hz (fs = 500 Hz). Per record the resonance is
/// jittered by up to +-4 Hz, the pole radius by +-0.02 around 0.93, and the
/// amplitude by a gain in [0.8, 1.2].
struct SyntheticRecipe {
  double sample_rate = 500.0;
  double pole_radius = 0.93;
  double radius_jitter = 0.02;
  double freq_jitter_hz = 4.0;
  double gain_min = 0.8;
  double gain_max = 1.2;
  double observation_noise = 1.0;
  std::size_t burn_in = 256;

  static double channel1_hz(std::size_t c) { return 30.0 + 36.0 * static_cast<double>(c); }
  static double channel2_hz(std::size_t c) { return 220.0 - 36.0 * static_cast<double>(c); }
};

inline Dataset generate_synthetic(std::size_t n_per_class, std::size_t length, std::uint64_t seed,
                                  const SyntheticRecipe& recipe = {}) {
  if (n_per_class < 2)
    throw std::invalid_argument("n_per_class must be >= 2");
  if (length < 64)
    throw std::invalid_argument("length must be >= 64");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> gain_dist(recipe.gain_min, recipe.gain_max);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const auto channel = [&](double centre_hz) {
    const double f = centre_hz + recipe.freq_jitter_hz * unit(rng);
    const double r = recipe.pole_radius + recipe.radius_jitter * unit(rng);
    const double g = gain_dist(rng);
    const double w = 2.0 * std::numbers::pi * f / recipe.sample_rate;
    const double a1 = 2.0 * r * std::cos(w);
    const double a2 = -r * r;
    std::vector<double> x(length);
    double x1 = 0.0, x2 = 0.0;
    for (std::size_t n = 0; n < recipe.burn_in + length; ++n) {
      const double v = a1 * x1 + a2 * x2 + gauss(rng);
      x2 = x1;
      x1 = v;
      if (n >= recipe.burn_in)
        x[n - recipe.burn_in] = g * (v + recipe.observation_noise * gauss(rng));
    }
    return x;
  };

  Dataset d;
  d.name = "synthetic-" + std::to_string(seed);
  d.records.reserve(n_per_class * kNumClasses);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    for (std::size_t k = 0; k < n_per_class; ++k) {
      EmgRecord r;
      r.channel1 = channel(SyntheticRecipe::channel1_hz(c));
      r.channel2 = channel(SyntheticRecipe::channel2_hz(c));
      r.sample_rate = recipe.sample_rate;
      r.label = label_from_index(c);
      r.subject_id = "synthetic";
      r.session_id = "1";
      char name[32];
      std::snprintf(name, sizeof name, "rec_%05zu.csv", d.records.size());
      r.file = name;
      d.records.push_back(std::move(r));
    }
  }
  return d;
}

} // namespace emg
