// emgcnn: command-line front end for the sEMG hand-guise classifier.
//
// Exit codes: 0 success, 1 usage or config error, 2 data error,
// 3 numerical divergence during training.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>

#include <CLI/CLI11.hpp>

#include "emg/config.hpp"
#include "emg/convert.hpp"
#include "emg/dataset.hpp"
#include "emg/errors.hpp"
#include "emg/features.hpp"
#include "emg/metrics.hpp"
#include "emg/model_io.hpp"
#include "emg/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kDiverged = 3 };

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string subset;
  std::string input;
  std::string data;
  std::string model;
  std::string record;
  std::string split;
  std::string part = "test";
  double sample_rate = 500.0;
  std::size_t per_class = 30;
  std::size_t length = 512;
  int progress = 10;
};

emg::RunConfig resolved_config(const Options& o) {
  if (o.config.empty())
    throw emg::ConfigError("--config is required");
  auto cfg = emg::load_config(o.config);
  if (o.seed)
    cfg.seed = o.seed;
  if (!o.subset.empty())
    cfg.subset = o.subset;
  if (!o.out.empty())
    cfg.out = o.out;
  return cfg;
}

void print_counts(const emg::Dataset& d) {
  const auto counts = d.class_counts();
  std::cout << "class counts:";
  for (std::size_t c = 0; c < emg::kNumClasses; ++c)
    std::cout << ' ' << emg::kLabelChars[c] << '=' << counts[c];
  std::cout << '\n';
}

int cmd_convert(const Options& o) {
  if (o.out.empty())
    throw emg::ConfigError("convert needs --out <dir>");
  const auto d = emg::convert_directory(o.input, o.out, o.sample_rate);
  std::cout << "wrote " << d.size() << " records to " << o.out << '\n';
  print_counts(d);
  return kOk;
}

int cmd_validate(const Options& o) {
  emg::Dataset d;
  if (!o.input.empty()) {
    d = emg::select_subset(emg::load_dataset(o.input), o.subset.empty() ? "all" : o.subset);
  } else {
    const auto cfg = resolved_config(o);
    cfg.validate();
    if (!cfg.features_csv.empty())
      throw emg::ConfigError("validate works on record datasets, not feature dumps");
    d = emg::load_source_dataset(cfg);
  }
  emg::validate_dataset(d);
  std::set<std::string> subjects, sessions;
  for (const auto& r : d.records) {
    subjects.insert(r.subject_id);
    sessions.insert(r.subject_id + "/" + r.session_id);
  }
  std::cout << "dataset " << d.name << ": " << d.size() << " records, length "
            << d.records.front().length() << ", " << emg::csv::format_double(d.records.front().sample_rate)
            << " Hz, " << subjects.size() << " subject(s), " << sessions.size() << " session(s)\n";
  print_counts(d);
  std::cout << "ok\n";
  return kOk;
}

int cmd_extract(const Options& o) {
  emg::Dataset d;
  emg::FeatureConfig fc;
  fs::path out = o.out;
  if (!o.data.empty()) {
    d = emg::select_subset(emg::load_dataset(o.data), o.subset.empty() ? "all" : o.subset);
  } else {
    const auto cfg = resolved_config(o);
    cfg.validate();
    if (!cfg.features_csv.empty())
      throw emg::ConfigError("extract needs a dataset or synthetic source, not features_csv");
    d = emg::load_source_dataset(cfg);
    fc = cfg.features;
    if (out.empty())
      out = cfg.out;
  }
  if (out.empty())
    throw emg::ConfigError("extract needs --out <dir>");
  const auto p = emg::features_from_dataset(d, fc);
  fs::create_directories(out);
  const auto path = out / "features.csv";
  emg::write_features_csv(p.features, path.string());
  std::cout << "wrote " << p.features.size() << " feature rows (" << fc.nbins << " bins per channel) to "
            << path.string() << '\n';
  return kOk;
}

int cmd_train(const Options& o) {
  const auto cfg = resolved_config(o);
  const int every = o.progress;
  const auto run = emg::run_training(cfg, [&](const emg::metrics::EpochStats& e) {
    if (every > 0 && (e.epoch % every == 0 || e.epoch == 1 || e.epoch == cfg.training.epochs))
      std::fprintf(stderr, "epoch %4d  train_loss %.4f  train_acc %.4f  test_loss %.4f  test_acc %.4f\n",
                   e.epoch, e.train_loss, e.train_acc, e.test_loss, e.test_acc);
  });
  emg::write_run(run, cfg.out);
  std::cout << "train/test: " << run.plan.train_indices.size() << '/' << run.plan.test_indices.size()
            << "  seed " << *cfg.seed << '\n'
            << emg::metrics::format_report(run.report) << "artifacts in " << cfg.out.string() << '\n';
  return kOk;
}

int cmd_eval(const Options& o) {
  const auto model = emg::load_model(o.model);
  std::vector<emg::FeatureVector> normalized;
  if (fs::is_regular_file(o.data)) {
    auto raw = emg::read_features_csv(o.data);
    for (const auto& f : raw)
      if (f.nbins() != model.network.spec.input_length)
        throw emg::DataError(o.data + ": feature dimension " + std::to_string(f.nbins()) +
                             " does not match model input " + std::to_string(model.network.spec.input_length));
    normalized = emg::normalize_all(model.normalizer, raw);
  } else {
    auto d = emg::select_subset(emg::load_dataset(o.data), o.subset.empty() ? "all" : o.subset);
    if (!o.split.empty()) {
      if (o.part != "train" && o.part != "test")
        throw emg::ConfigError("--part must be train or test");
      d = emg::select_split_part(d, o.split, o.part == "train");
    }
    normalized = emg::model_features(model, d);
  }
  const auto report = emg::evaluate_model(model, normalized);
  if (!o.out.empty()) {
    emg::metrics::write_report(report, o.out);
  }
  std::cout << emg::metrics::format_report(report);
  return kOk;
}

int cmd_predict(const Options& o) {
  const auto model = emg::load_model(o.model);
  auto r = emg::read_record_csv(o.record);
  r.sample_rate = model.sample_rate;
  r.file = o.record;
  emg::validate_record(r, o.record);
  const auto f = emg::apply_normalizer(model.normalizer, emg::extract_features(r, model.features, o.record));
  const auto pred = emg::nn::predict(model.network, f);
  std::cout << "label";
  for (char c : emg::kLabelChars)
    std::cout << ",p_" << c;
  std::cout << '\n' << emg::to_char(pred.label);
  for (double p : pred.probabilities)
    std::cout << ',' << emg::csv::format_double(p);
  std::cout << '\n';
  return kOk;
}

int cmd_synth(const Options& o) {
  if (o.out.empty())
    throw emg::ConfigError("synth needs --out <dir>");
  if (fs::exists(fs::path(o.out) / "manifest.csv"))
    throw emg::ConfigError(o.out + " already contains manifest.csv; refusing to overwrite");
  const auto d = emg::generate_synthetic(o.per_class, o.length, o.seed.value_or(1));
  emg::write_dataset(d, o.out);
  std::cout << "wrote " << d.size() << " synthetic records to " << o.out << '\n';
  return kOk;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-channel sEMG hand-guise classifier: Burg AR spectra + CNN"};
  app.require_subcommand(1);
  Options o;

  auto* convert = app.add_subcommand("convert", "Convert exported class matrices to the record layout");
  convert->add_option("input", o.input, "Directory of <class>_ch1.csv/<class>_ch2.csv matrices or index.csv")
      ->required();
  convert->add_option("--out", o.out, "Output dataset directory")->required();
  convert->add_option("--sample-rate", o.sample_rate, "Sample rate when index.csv has none")
      ->capture_default_str();

  auto* validate = app.add_subcommand("validate", "Check a dataset and print its composition");
  validate->add_option("dataset", o.input, "Dataset directory (or use --config)");
  validate->add_option("--config", o.config, "Run config");
  validate->add_option("--subset", o.subset, "all | subject=<id> | session=<id>");

  auto* extract = app.add_subcommand("extract", "Write log-PSD features of a dataset to features.csv");
  extract->add_option("--data", o.data, "Dataset directory (default features)");
  extract->add_option("--config", o.config, "Run config (data source and feature settings)");
  extract->add_option("--out", o.out, "Output directory");
  extract->add_option("--seed", o.seed, "Override the config seed");
  extract->add_option("--subset", o.subset, "all | subject=<id> | session=<id>");

  auto* train = app.add_subcommand("train", "Train and write model, split, normaliser and reports");
  train->add_option("--config", o.config, "Run config")->required();
  train->add_option("--out", o.out, "Override the output directory");
  train->add_option("--seed", o.seed, "Override the config seed");
  train->add_option("--subset", o.subset, "Override the subset selector");
  train->add_option("--progress", o.progress, "Print every N epochs to stderr (0 = quiet)")
      ->capture_default_str();

  auto* eval = app.add_subcommand("eval", "Evaluate a stored model on a dataset");
  eval->add_option("--model", o.model, "model.bin")->required();
  eval->add_option("--data", o.data, "Dataset directory or features.csv")->required();
  eval->add_option("--split", o.split, "split.csv restricting the records to one part");
  eval->add_option("--part", o.part, "train | test (with --split)")->capture_default_str();
  eval->add_option("--subset", o.subset, "all | subject=<id> | session=<id>");
  eval->add_option("--out", o.out, "Write confusion.csv, summary.csv and report.txt here");

  auto* predict = app.add_subcommand("predict", "Classify one record file");
  predict->add_option("--model", o.model, "model.bin")->required();
  predict->add_option("--record", o.record, "Record CSV (ch1,ch2 rows)")->required();

  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset with spectrally separable classes");
  synth->add_option("--out", o.out, "Output dataset directory")->required();
  synth->add_option("--seed", o.seed, "Generator seed (default 1)");
  synth->add_option("--per-class", o.per_class, "Records per class")->capture_default_str();
  synth->add_option("--length", o.length, "Samples per channel")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*convert)
      return cmd_convert(o);
    if (*validate)
      return cmd_validate(o);
    if (*extract)
      return cmd_extract(o);
    if (*train)
      return cmd_train(o);
    if (*eval)
      return cmd_eval(o);
    if (*predict)
      return cmd_predict(o);
    if (*synth)
      return cmd_synth(o);
  } catch (const emg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const emg::DivergenceError& e) {
    std::cerr << "training diverged at epoch " << e.epoch() << ": " << e.what()
              << " (try a smaller learning_rate)\n";
    return kDiverged;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
