#pragma once

// End-to-end runs shared by the command-line tool and the acceptance suite:
// load or generate data -> features -> split -> normalise -> train -> report.
//
// Randomness comes from the config seed through named sub-seeds: "split" for
// the train/test partition, "init" and "shuffle" inside nn::train, and
// "synthetic" for generated data.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "emg/config.hpp"
#include "emg/dataset.hpp"
#include "emg/errors.hpp"
#include "emg/features.hpp"
#include "emg/metrics.hpp"
#include "emg/model_io.hpp"
#include "emg/nn/network.hpp"
#include "emg/nn/train.hpp"
#include "emg/seeding.hpp"

namespace emg {

/// Features of every item in a run, with a name per item for split.csv.
struct PreparedData {
  std::string name;
  double sample_rate = 500.0;
  std::vector<FeatureVector> features;
  std::vector<std::string> names;

  std::vector<ClassLabel> labels() const {
    std::vector<ClassLabel> out;
    out.reserve(features.size());
    for (const auto& f : features)
      out.push_back(f.label);
    return out;
  }
};

/// Loads the configured dataset (or generates it) and applies the subset selector.
inline Dataset load_source_dataset(const RunConfig& cfg) {
  Dataset d = cfg.synthetic
                  ? generate_synthetic(cfg.synthetic->n_per_class, cfg.synthetic->length,
                                       derive_seed(*cfg.seed, "synthetic"))
                  : load_dataset(cfg.dataset);
  return select_subset(d, cfg.subset);
}

inline PreparedData features_from_dataset(const Dataset& d, const FeatureConfig& fc) {
  validate_dataset(d);
  PreparedData p;
  p.name = d.name;
  p.sample_rate = d.records.front().sample_rate;
  p.features = extract_all(d, fc);
  for (std::size_t i = 0; i < d.records.size(); ++i)
    p.names.push_back(d.records[i].file.empty() ? record_name(d.records[i], i) : d.records[i].file);
  return p;
}

inline PreparedData prepare_data(const RunConfig& cfg) {
  if (cfg.features_csv.empty())
    return features_from_dataset(load_source_dataset(cfg), cfg.features);
  PreparedData p;
  p.name = cfg.features_csv.stem().string();
  p.sample_rate = cfg.sample_rate;
  p.features = read_features_csv(cfg.features_csv.string());
  if (p.features.empty())
    throw DataError("no records found in " + cfg.features_csv.string());
  for (std::size_t i = 0; i < p.features.size(); ++i) {
    if (p.features[i].nbins() != static_cast<std::size_t>(cfg.features.nbins))
      throw DataError(cfg.features_csv.string() + ": row " + std::to_string(i + 2) + " has " +
                      std::to_string(p.features[i].nbins()) + " bins per channel, config says " +
                      std::to_string(cfg.features.nbins));
    p.names.push_back("row " + std::to_string(i + 2));
  }
  return p;
}

inline std::vector<FeatureVector> gather(std::span<const FeatureVector> all, std::span<const std::size_t> idx) {
  std::vector<FeatureVector> out;
  out.reserve(idx.size());
  for (auto i : idx)
    out.push_back(all[i]);
  return out;
}

inline std::vector<FeatureVector> normalize_all(const Normalizer& n, std::span<const FeatureVector> fs) {
  std::vector<FeatureVector> out;
  out.reserve(fs.size());
  for (const auto& f : fs)
    out.push_back(apply_normalizer(n, f));
  return out;
}

inline Normalizer make_normalizer(const FeatureConfig& fc, std::span<const FeatureVector> train,
                                  const std::string& fitted_on) {
  if (fc.normalization == Normalization::none) {
    auto n = Normalizer::identity(static_cast<std::size_t>(fc.nbins));
    n.fitted_on = "identity";
    return n;
  }
  return fit_normalizer(train, fitted_on);
}

struct TrainingRun {
  RunConfig config;
  PreparedData data;
  SplitPlan plan;
  Normalizer normalizer;
  nn::TrainResult result;
  /// Test-set report for the final model, with the full epoch history.
  metrics::EvalReport report;
  /// Test-set confusion at the epoch of maximum test accuracy.
  metrics::ConfusionMatrix max_confusion;
  ModelArtifact model;
};

/// Runs the whole protocol. Throws ConfigError before any computation if the
/// config is invalid.
inline TrainingRun run_training(const RunConfig& cfg,
                                const std::function<void(const metrics::EpochStats&)>& on_epoch = {}) {
  cfg.validate();
  TrainingRun run;
  run.config = cfg;
  run.data = prepare_data(cfg);
  const std::uint64_t seed = *cfg.seed;
  run.plan = split_labels(run.data.labels(), cfg.train_fraction, derive_seed(seed, "split"));

  const auto train_raw = gather(run.data.features, run.plan.train_indices);
  const auto test_raw = gather(run.data.features, run.plan.test_indices);
  run.normalizer = make_normalizer(cfg.features, train_raw,
                                   run.data.name + " split-seed " + std::to_string(seed));
  const auto train_set = normalize_all(run.normalizer, train_raw);
  const auto test_set = normalize_all(run.normalizer, test_raw);

  run.result = nn::train(cfg.resolved_network(), train_set, test_set, cfg.resolved_training(), on_epoch);

  const auto truths = nn::label_indices(test_set);
  run.report = metrics::summarize(
      run.result.log, metrics::confusion_matrix(truths, run.result.final_test_predictions, kNumClasses));
  run.max_confusion = metrics::confusion_matrix(truths, run.result.best_test_predictions, kNumClasses);

  run.model.network = run.result.state;
  run.model.features = cfg.features;
  run.model.normalizer = run.normalizer;
  run.model.sample_rate = run.data.sample_rate;
  run.model.seed = seed;
  run.model.dataset_name = run.data.name;
  return run;
}

inline std::string config_echo(const RunConfig& cfg) {
  return to_json(cfg).dump(2) + "\n";
}

/// Writes model.bin, normalizer.csv, split.csv, config.echo, epochs.csv,
/// confusion.csv, confusion_max.csv, summary.csv and report.txt into `dir`.
inline void write_run(const TrainingRun& run, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_model(run.model, dir / "model.bin");
  write_normalizer(run.normalizer, (dir / "normalizer.csv").string());
  write_split(run.plan, run.data.labels(), run.data.names, (dir / "split.csv").string());
  csv::open_out((dir / "config.echo").string()) << config_echo(run.config);
  metrics::write_report(run.report, dir);
  metrics::write_confusion_csv(run.max_confusion, (dir / "confusion_max.csv").string());
}

/// Features for `d` computed with the model's feature settings, normalised
/// with the stored normaliser.
inline std::vector<FeatureVector> model_features(const ModelArtifact& m, const Dataset& d) {
  validate_dataset(d);
  if (d.records.front().sample_rate != m.sample_rate)
    throw DataError("data sample rate " + csv::format_double(d.records.front().sample_rate) +
                    " Hz does not match the model's " + csv::format_double(m.sample_rate) + " Hz");
  return normalize_all(m.normalizer, extract_all(d, m.features));
}

/// Confusion-based report of a stored model on already-normalised features.
inline metrics::EvalReport evaluate_model(const ModelArtifact& m, std::span<const FeatureVector> normalized) {
  if (normalized.empty())
    throw DataError("no records to evaluate");
  for (const auto& f : normalized)
    if (f.nbins() != m.network.spec.input_length || f.channel2.size() != m.network.spec.input_length)
      throw DataError("feature dimension " + std::to_string(f.nbins()) + " does not match model input " +
                      std::to_string(m.network.spec.input_length));
  const auto pass = nn::evaluate(m.network, normalized);
  return metrics::evaluate_confusion(
      metrics::confusion_matrix(nn::label_indices(normalized), pass.predictions, kNumClasses));
}

/// Records of `d` listed in split.csv under the requested part, matched by file name.
inline Dataset select_split_part(const Dataset& d, const std::string& split_path, bool train_part) {
  std::map<std::string, std::size_t> by_file;
  for (std::size_t i = 0; i < d.records.size(); ++i)
    by_file[d.records[i].file] = i;
  std::vector<std::size_t> idx;
  for (const auto& row : read_split_rows(split_path)) {
    if (row.train != train_part)
      continue;
    const auto it = by_file.find(row.file);
    if (it == by_file.end())
      throw DataError(split_path + ": record '" + row.file + "' is not in dataset " + d.name);
    if (d.records[it->second].label != row.label)
      throw DataError(split_path + ": label of '" + row.file + "' differs from the dataset");
    idx.push_back(it->second);
  }
  if (idx.empty())
    throw DataError(split_path + ": no " + (train_part ? "train" : "test") + " rows");
  auto out = subset(d, idx);
  out.name = d.name + "[" + (train_part ? "train" : "test") + "]";
  return out;
}

} // namespace emg
