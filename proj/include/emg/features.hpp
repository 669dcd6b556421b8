#pragma once

// Per-channel log-PSD features: Burg AR fit -> AR spectrum on a fixed grid ->
// log10 with a floor. A z-score normaliser is fitted on training features only.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "emg/burg.hpp"
#include "emg/csv.hpp"
#include "emg/dataset.hpp"
#include "emg/errors.hpp"
#include "emg/labels.hpp"

namespace emg {

enum class Normalization { zscore, none };

struct FeatureConfig {
  int ar_order = 10;
  int nbins = 128;
  double log_floor = 1e-12;
  Normalization normalization = Normalization::zscore;

  void validate() const {
    if (ar_order < 1)
      throw ConfigError("ar_order must be >= 1");
    if (nbins < 8)
      throw ConfigError("nbins must be >= 8");
    if (!(log_floor > 0.0))
      throw ConfigError("log_floor must be > 0");
  }
  bool operator==(const FeatureConfig&) const = default;
};

struct FeatureVector {
  std::vector<double> channel1;
  std::vector<double> channel2;
  ClassLabel label = ClassLabel::Cylindrical;

  std::size_t nbins() const noexcept { return channel1.size(); }
  bool operator==(const FeatureVector&) const = default;
};

inline std::vector<double> log_psd(std::span<const double> x, double sample_rate,
                                   const FeatureConfig& cfg) {
  const auto model = burg::burg_fit(x, cfg.ar_order, sample_rate);
  auto psd = burg::psd_from_model(model, static_cast<std::size_t>(cfg.nbins));
  for (double& p : psd.power)
    p = std::log10(std::max(p, cfg.log_floor));
  return std::move(psd.power);
}

inline FeatureVector extract_features(const EmgRecord& r, const FeatureConfig& cfg,
                                      const std::string& where = "record") {
  if (r.length() <= static_cast<std::size_t>(cfg.ar_order) + 1)
    throw DataError(where + ": length " + std::to_string(r.length()) +
                    " is too short for AR order " + std::to_string(cfg.ar_order));
  FeatureVector f;
  f.label = r.label;
  try {
    f.channel1 = log_psd(r.channel1, r.sample_rate, cfg);
    f.channel2 = log_psd(r.channel2, r.sample_rate, cfg);
  } catch (const DegenerateSignalError& e) {
    throw DegenerateSignalError(where + ": " + e.what());
  }
  return f;
}

inline std::vector<FeatureVector> extract_all(const Dataset& d, const FeatureConfig& cfg) {
  std::vector<FeatureVector> out;
  out.reserve(d.records.size());
  for (std::size_t i = 0; i < d.records.size(); ++i)
    out.push_back(extract_features(d.records[i], cfg, record_name(d.records[i], i)));
  return out;
}

struct Normalizer {
  static constexpr double kStdFloor = 1e-8;

  std::vector<double> mean1, std1;
  std::vector<double> mean2, std2;
  std::string fitted_on;

  std::size_t nbins() const noexcept { return mean1.size(); }
  bool operator==(const Normalizer&) const = default;

  static Normalizer identity(std::size_t nbins) {
    Normalizer n;
    n.mean1.assign(nbins, 0.0);
    n.mean2.assign(nbins, 0.0);
    n.std1.assign(nbins, 1.0);
    n.std2.assign(nbins, 1.0);
    n.fitted_on = "identity";
    return n;
  }
};

inline Normalizer fit_normalizer(std::span<const FeatureVector> features,
                                 std::string fitted_on = {}) {
  if (features.empty())
    throw DataError("cannot fit a normaliser on an empty feature list");
  const std::size_t nb = features.front().nbins();
  for (const auto& f : features)
    if (f.channel1.size() != nb || f.channel2.size() != nb)
      throw DataError("feature dimension mismatch while fitting normaliser");

  const auto column_stats = [&](auto member, std::vector<double>& mean, std::vector<double>& sd) {
    mean.assign(nb, 0.0);
    sd.assign(nb, 0.0);
    const double n = static_cast<double>(features.size());
    for (const auto& f : features)
      for (std::size_t k = 0; k < nb; ++k)
        mean[k] += (f.*member)[k];
    for (auto& m : mean)
      m /= n;
    for (const auto& f : features)
      for (std::size_t k = 0; k < nb; ++k) {
        const double d = (f.*member)[k] - mean[k];
        sd[k] += d * d;
      }
    for (auto& s : sd)
      s = std::max(std::sqrt(s / n), Normalizer::kStdFloor);
  };

  Normalizer out;
  column_stats(&FeatureVector::channel1, out.mean1, out.std1);
  column_stats(&FeatureVector::channel2, out.mean2, out.std2);
  out.fitted_on = std::move(fitted_on);
  return out;
}

inline FeatureVector apply_normalizer(const Normalizer& n, const FeatureVector& f) {
  if (f.channel1.size() != n.nbins() || f.channel2.size() != n.nbins())
    throw DataError("feature dimension " + std::to_string(f.nbins()) +
                    " does not match normaliser dimension " + std::to_string(n.nbins()));
  FeatureVector out = f;
  for (std::size_t k = 0; k < n.nbins(); ++k) {
    out.channel1[k] = (f.channel1[k] - n.mean1[k]) / n.std1[k];
    out.channel2[k] = (f.channel2[k] - n.mean2[k]) / n.std2[k];
  }
  return out;
}

inline FeatureVector invert_normalizer(const Normalizer& n, const FeatureVector& f) {
  if (f.channel1.size() != n.nbins() || f.channel2.size() != n.nbins())
    throw DataError("feature dimension does not match normaliser");
  FeatureVector out = f;
  for (std::size_t k = 0; k < n.nbins(); ++k) {
    out.channel1[k] = f.channel1[k] * n.std1[k] + n.mean1[k];
    out.channel2[k] = f.channel2[k] * n.std2[k] + n.mean2[k];
  }
  return out;
}

// normalizer.csv:
//   fitted_on,<text>
//   channel,bin,mean,std
//   1,0,<mean>,<std>
//   ...
inline void write_normalizer(const Normalizer& n, const std::string& path) {
  auto out = csv::open_out(path);
  out << "fitted_on," << n.fitted_on << "\nchannel,bin,mean,std\n";
  for (int ch = 1; ch <= 2; ++ch) {
    const auto& mean = ch == 1 ? n.mean1 : n.mean2;
    const auto& sd = ch == 1 ? n.std1 : n.std2;
    for (std::size_t k = 0; k < mean.size(); ++k)
      out << ch << ',' << k << ',' << csv::format_double(mean[k]) << ','
          << csv::format_double(sd[k]) << '\n';
  }
}

inline Normalizer read_normalizer(const std::string& path) {
  const auto lines = csv::read_lines(path);
  if (lines.size() < 2 || !lines[0].starts_with("fitted_on,"))
    throw DataError(path, 1, "expected fitted_on line");
  Normalizer n;
  n.fitted_on = lines[0].substr(std::string("fitted_on,").size());
  for (std::size_t i = 2; i < lines.size(); ++i) {
    const auto cells = csv::split(lines[i]);
    long long ch, bin;
    double mean, sd;
    if (cells.size() != 4 || !csv::parse_long(cells[0], ch) || !csv::parse_long(cells[1], bin) ||
        !csv::parse_double(cells[2], mean) || !csv::parse_double(cells[3], sd) ||
        (ch != 1 && ch != 2))
      throw DataError(path, i + 1, "malformed normaliser row");
    auto& mv = ch == 1 ? n.mean1 : n.mean2;
    auto& sv = ch == 1 ? n.std1 : n.std2;
    if (bin != static_cast<long long>(mv.size()))
      throw DataError(path, i + 1, "bins out of order");
    mv.push_back(mean);
    sv.push_back(sd);
  }
  if (n.mean1.size() != n.mean2.size() || n.mean1.empty())
    throw DataError(path + ": channel sizes differ");
  return n;
}

/// Feature dump: header `label,ch1_f0..ch1_f{n-1},ch2_f0..ch2_f{n-1}`, one row per record.
inline void write_features_csv(std::span<const FeatureVector> features, const std::string& path) {
  auto out = csv::open_out(path);
  const std::size_t nb = features.empty() ? 0 : features.front().nbins();
  out << "label";
  for (int ch = 1; ch <= 2; ++ch)
    for (std::size_t k = 0; k < nb; ++k)
      out << ",ch" << ch << "_f" << k;
  out << '\n';
  for (const auto& f : features) {
    out << to_char(f.label);
    for (double v : f.channel1)
      out << ',' << csv::format_double(v);
    for (double v : f.channel2)
      out << ',' << csv::format_double(v);
    out << '\n';
  }
}

inline std::vector<FeatureVector> read_features_csv(const std::string& path) {
  const auto lines = csv::read_lines(path);
  if (lines.empty())
    throw DataError(path + ": empty feature file");
  const auto header = csv::split(lines[0]);
  if (header.empty() || header[0] != "label" || header.size() % 2 != 1 || header.size() < 3)
    throw DataError(path, 1, "malformed feature header");
  const std::size_t nb = (header.size() - 1) / 2;
  std::vector<FeatureVector> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = csv::split(lines[i]);
    if (cells.size() != header.size())
      throw DataError(path, i + 1, "expected " + std::to_string(header.size()) + " columns");
    const auto label = parse_label(cells[0]);
    if (!label)
      throw DataError(path, i + 1, "unknown label '" + std::string(cells[0]) + "'");
    FeatureVector f;
    f.label = *label;
    f.channel1.resize(nb);
    f.channel2.resize(nb);
    for (std::size_t k = 0; k < 2 * nb; ++k) {
      double v;
      if (!csv::parse_double(cells[k + 1], v))
        throw DataError(path, i + 1, "malformed value in column " + std::to_string(k + 2));
      (k < nb ? f.channel1[k] : f.channel2[k - nb]) = v;
    }
    out.push_back(std::move(f));
  }
  if (out.empty())
    throw DataError(path + ": no feature rows");
  return out;
}

} // namespace emg
