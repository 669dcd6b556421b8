#pragma once

// Classification metrics and the per-run report.
//
// Confusion matrix rows are true classes, columns predicted classes.
// "Average accuracy" is the mean test accuracy over all epochs; "model
// accuracy" is the test accuracy of the last epoch.

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "emg/csv.hpp"
#include "emg/errors.hpp"
#include "emg/labels.hpp"

namespace emg::metrics {

class ConfusionMatrix {
public:
  explicit ConfusionMatrix(std::size_t num_classes = kNumClasses)
      : k_(num_classes), counts_(num_classes * num_classes, 0) {}

  std::size_t num_classes() const noexcept { return k_; }
  std::size_t& at(std::size_t truth, std::size_t pred) { return counts_.at(truth * k_ + pred); }
  std::size_t at(std::size_t truth, std::size_t pred) const { return counts_.at(truth * k_ + pred); }

  std::size_t total() const noexcept {
    std::size_t t = 0;
    for (auto c : counts_)
      t += c;
    return t;
  }
  std::size_t trace() const noexcept {
    std::size_t t = 0;
    for (std::size_t i = 0; i < k_; ++i)
      t += counts_[i * k_ + i];
    return t;
  }
  std::size_t row_sum(std::size_t truth) const {
    std::size_t s = 0;
    for (std::size_t j = 0; j < k_; ++j)
      s += at(truth, j);
    return s;
  }
  std::size_t column_sum(std::size_t pred) const {
    std::size_t s = 0;
    for (std::size_t i = 0; i < k_; ++i)
      s += at(i, pred);
    return s;
  }

  bool operator==(const ConfusionMatrix&) const = default;

private:
  std::size_t k_;
  std::vector<std::size_t> counts_;
};

inline ConfusionMatrix confusion_matrix(std::span<const std::size_t> truths,
                                        std::span<const std::size_t> preds,
                                        std::size_t num_classes = kNumClasses) {
  if (truths.size() != preds.size())
    throw std::invalid_argument("truth and prediction lists differ in length");
  if (truths.empty())
    throw std::invalid_argument("no samples to evaluate");
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (truths[i] >= num_classes || preds[i] >= num_classes)
      throw std::invalid_argument("class index out of range");
    ++cm.at(truths[i], preds[i]);
  }
  return cm;
}

inline double accuracy(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  return total == 0 ? 0.0 : static_cast<double>(cm.trace()) / static_cast<double>(total);
}

struct PrecisionRecall {
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<std::string> warnings;
};

/// Zero denominators give 0 and a warning.
inline PrecisionRecall precision_recall(const ConfusionMatrix& cm) {
  PrecisionRecall pr;
  const std::size_t k = cm.num_classes();
  pr.precision.resize(k);
  pr.recall.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    const auto tp = static_cast<double>(cm.at(c, c));
    const auto predicted = cm.column_sum(c);
    const auto actual = cm.row_sum(c);
    const std::string name =
        k == kNumClasses ? std::string(1, kLabelChars[c]) : std::to_string(c);
    if (predicted == 0)
      pr.warnings.push_back("class " + name + " never predicted; precision set to 0");
    if (actual == 0)
      pr.warnings.push_back("class " + name + " has no samples; recall set to 0");
    pr.precision[c] = predicted == 0 ? 0.0 : tp / static_cast<double>(predicted);
    pr.recall[c] = actual == 0 ? 0.0 : tp / static_cast<double>(actual);
  }
  return pr;
}

inline std::vector<double> per_class_f1(const ConfusionMatrix& cm) {
  const auto pr = precision_recall(cm);
  std::vector<double> f1(cm.num_classes());
  for (std::size_t c = 0; c < f1.size(); ++c) {
    const double s = pr.precision[c] + pr.recall[c];
    f1[c] = s == 0.0 ? 0.0 : 2.0 * pr.precision[c] * pr.recall[c] / s;
  }
  return f1;
}

/// Per-class F1 weighted by true-class support.
inline double f1_weighted(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total == 0)
    return 0.0;
  const auto f1 = per_class_f1(cm);
  double sum = 0.0;
  for (std::size_t c = 0; c < f1.size(); ++c)
    sum += static_cast<double>(cm.row_sum(c)) * f1[c];
  return sum / static_cast<double>(total);
}

inline double f1_macro(const ConfusionMatrix& cm) {
  const auto f1 = per_class_f1(cm);
  double sum = 0.0;
  for (double v : f1)
    sum += v;
  return sum / static_cast<double>(f1.size());
}

struct EpochStats {
  int epoch = 0; // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_loss = 0.0;
  double test_acc = 0.0;
  bool operator==(const EpochStats&) const = default;
};

using EpochLog = std::vector<EpochStats>;

struct EvalReport {
  ConfusionMatrix confusion;
  double accuracy = 0.0;
  std::vector<double> per_class_precision;
  std::vector<double> per_class_recall;
  double f1_weighted = 0.0;
  double f1_macro = 0.0;
  EpochLog epoch_log;
  double model_accuracy = 0.0;
  double max_accuracy = 0.0;
  int max_accuracy_epoch = 0;
  double average_accuracy = 0.0;
  std::vector<std::string> warnings;

  bool operator==(const EvalReport& o) const {
    // Warnings are derived from the confusion matrix, so they are not compared.
    return confusion == o.confusion && accuracy == o.accuracy &&
           per_class_precision == o.per_class_precision &&
           per_class_recall == o.per_class_recall && f1_weighted == o.f1_weighted &&
           f1_macro == o.f1_macro && epoch_log == o.epoch_log &&
           model_accuracy == o.model_accuracy && max_accuracy == o.max_accuracy &&
           max_accuracy_epoch == o.max_accuracy_epoch && average_accuracy == o.average_accuracy;
  }
};

/// Confusion-only report (no training history).
inline EvalReport evaluate_confusion(const ConfusionMatrix& cm) {
  EvalReport r;
  r.confusion = cm;
  r.accuracy = accuracy(cm);
  auto pr = precision_recall(cm);
  r.per_class_precision = std::move(pr.precision);
  r.per_class_recall = std::move(pr.recall);
  r.warnings = std::move(pr.warnings);
  r.f1_weighted = f1_weighted(cm);
  r.f1_macro = f1_macro(cm);
  r.model_accuracy = r.max_accuracy = r.average_accuracy = r.accuracy;
  return r;
}

/// Combines the epoch history with the confusion matrix of the final model.
/// The earliest epoch wins ties for the maximum.
inline EvalReport summarize(const EpochLog& log, const ConfusionMatrix& final_confusion) {
  if (log.empty())
    throw std::invalid_argument("empty epoch log");
  EvalReport r = evaluate_confusion(final_confusion);
  r.epoch_log = log;
  r.model_accuracy = log.back().test_acc;
  r.max_accuracy = log.front().test_acc;
  r.max_accuracy_epoch = log.front().epoch;
  double sum = 0.0;
  for (const auto& e : log) {
    sum += e.test_acc;
    if (e.test_acc > r.max_accuracy) {
      r.max_accuracy = e.test_acc;
      r.max_accuracy_epoch = e.epoch;
    }
  }
  r.average_accuracy = sum / static_cast<double>(log.size());
  return r;
}

// --- serialisation -----------------------------------------------------------

inline void write_confusion_csv(const ConfusionMatrix& cm, const std::string& path) {
  auto out = csv::open_out(path);
  const std::size_t k = cm.num_classes();
  const auto name = [&](std::size_t c) {
    return k == kNumClasses ? std::string(1, kLabelChars[c]) : std::to_string(c);
  };
  out << "true\\pred";
  for (std::size_t j = 0; j < k; ++j)
    out << ',' << name(j);
  out << '\n';
  for (std::size_t i = 0; i < k; ++i) {
    out << name(i);
    for (std::size_t j = 0; j < k; ++j)
      out << ',' << cm.at(i, j);
    out << '\n';
  }
}

inline ConfusionMatrix read_confusion_csv(const std::string& path) {
  const auto lines = csv::read_lines(path);
  if (lines.empty())
    throw DataError(path + ": empty confusion file");
  const std::size_t k = csv::split(lines[0]).size() - 1;
  if (lines.size() != k + 1)
    throw DataError(path + ": confusion matrix is not square");
  ConfusionMatrix cm(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto cells = csv::split(lines[i + 1]);
    if (cells.size() != k + 1)
      throw DataError(path, i + 2, "wrong column count");
    for (std::size_t j = 0; j < k; ++j) {
      long long v;
      if (!csv::parse_long(cells[j + 1], v) || v < 0)
        throw DataError(path, i + 2, "invalid count");
      cm.at(i, j) = static_cast<std::size_t>(v);
    }
  }
  return cm;
}

inline void write_epochs_csv(const EpochLog& log, const std::string& path) {
  auto out = csv::open_out(path);
  out << "epoch,train_loss,train_acc,test_loss,test_acc\n";
  for (const auto& e : log)
    out << e.epoch << ',' << csv::format_double(e.train_loss) << ','
        << csv::format_double(e.train_acc) << ',' << csv::format_double(e.test_loss) << ','
        << csv::format_double(e.test_acc) << '\n';
}

inline EpochLog read_epochs_csv(const std::string& path) {
  const auto lines = csv::read_lines(path);
  EpochLog log;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = csv::split(lines[i]);
    EpochStats e;
    long long ep;
    if (cells.size() != 5 || !csv::parse_long(cells[0], ep) ||
        !csv::parse_double(cells[1], e.train_loss) || !csv::parse_double(cells[2], e.train_acc) ||
        !csv::parse_double(cells[3], e.test_loss) || !csv::parse_double(cells[4], e.test_acc))
      throw DataError(path, i + 1, "malformed epoch row");
    e.epoch = static_cast<int>(ep);
    log.push_back(e);
  }
  return log;
}

/// summary.csv: `metric,value` rows.
inline void write_summary_csv(const EvalReport& r, const std::string& path) {
  auto out = csv::open_out(path);
  const auto vec = [](const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i)
      s += (i ? ";" : "") + csv::format_double(v[i]);
    return s;
  };
  out << "metric,value\n"
      << "model_accuracy," << csv::format_double(r.model_accuracy) << '\n'
      << "max_accuracy," << csv::format_double(r.max_accuracy) << '\n'
      << "max_accuracy_epoch," << r.max_accuracy_epoch << '\n'
      << "average_accuracy," << csv::format_double(r.average_accuracy) << '\n'
      << "accuracy," << csv::format_double(r.accuracy) << '\n'
      << "f1_weighted," << csv::format_double(r.f1_weighted) << '\n'
      << "f1_macro," << csv::format_double(r.f1_macro) << '\n'
      << "precision," << vec(r.per_class_precision) << '\n'
      << "recall," << vec(r.per_class_recall) << '\n'
      << "samples," << r.confusion.total() << '\n';
}

inline std::string format_report(const EvalReport& r) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << "samples            " << r.confusion.total() << '\n'
     << "accuracy           " << r.accuracy << '\n'
     << "f1 (weighted)      " << r.f1_weighted << '\n'
     << "f1 (macro)         " << r.f1_macro << '\n';
  if (!r.epoch_log.empty())
    os << "model accuracy     " << r.model_accuracy << " (epoch " << r.epoch_log.back().epoch
       << ")\n"
       << "max accuracy       " << r.max_accuracy << " (epoch " << r.max_accuracy_epoch << ")\n"
       << "average accuracy   " << r.average_accuracy << '\n';
  os << "class  precision  recall\n";
  for (std::size_t c = 0; c < r.per_class_precision.size(); ++c)
    os << "  " << (c < kNumClasses ? kLabelChars[c] : '?') << "    " << r.per_class_precision[c]
       << "     " << r.per_class_recall[c] << '\n';
  for (const auto& w : r.warnings)
    os << "warning: " << w << '\n';
  return os.str();
}

inline void write_report(const EvalReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_confusion_csv(r.confusion, (dir / "confusion.csv").string());
  write_summary_csv(r, (dir / "summary.csv").string());
  if (!r.epoch_log.empty())
    write_epochs_csv(r.epoch_log, (dir / "epochs.csv").string());
  auto txt = csv::open_out((dir / "report.txt").string());
  txt << format_report(r);
}

/// Rebuilds a report from confusion.csv and (when present) epochs.csv.
inline EvalReport read_report(const std::filesystem::path& dir) {
  const auto cm = read_confusion_csv((dir / "confusion.csv").string());
  const auto epochs = dir / "epochs.csv";
  if (std::filesystem::exists(epochs))
    return summarize(read_epochs_csv(epochs.string()), cm);
  return evaluate_confusion(cm);
}

} // namespace emg::metrics
