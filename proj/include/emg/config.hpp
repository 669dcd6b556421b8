#pragma once

// Run configuration (JSON). Unknown keys are rejected so typos cannot silently
// fall back to defaults; `to_json` writes every field, defaults included.
//
// {
//   "seed": 7,                          required
//   "dataset": "data/db1",              exactly one data source:
//   "features_csv": "features.csv",       dataset dir, feature dump,
//   "synthetic": {"n_per_class": 30, "length": 512},   or generated data
//   "sample_rate": 500,                 only used with features_csv
//   "subset": "all",                    all | subject=<id> | session=<id> | both
//   "train_fraction": 0.7,
//   "out": "runs/db1",
//   "features": {"ar_order": 10, "nbins": 128, "log_floor": 1e-12, "normalization": "zscore"},
//   "network":  {"conv": [{"filters": 32, "kernel": 5, "stride": 1}, ...],
//                "dense_units": 64, "activation": "relu"},
//   "training": {"epochs": 300, "batch_size": 32, "learning_rate": 0.01,
//                "momentum": 0.9, "optimizer": "sgd_momentum"}
// }
//
// Relative paths are resolved against the directory holding the config file
// and stored (and echoed) as absolute paths.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "emg/errors.hpp"
#include "emg/features.hpp"
#include "emg/model_io.hpp"
#include "emg/nn/network.hpp"
#include "emg/nn/train.hpp"

namespace emg {

struct SyntheticSource {
  std::size_t n_per_class = 30;
  std::size_t length = 512;
  bool operator==(const SyntheticSource&) const = default;
};

struct RunConfig {
  std::optional<std::uint64_t> seed;
  std::filesystem::path dataset;
  std::filesystem::path features_csv;
  std::optional<SyntheticSource> synthetic;
  double sample_rate = 500.0;
  std::string subset = "all";
  double train_fraction = 0.7;
  std::filesystem::path out = "run";
  FeatureConfig features;
  nn::NetworkSpec network;
  nn::TrainConfig training;

  /// Throws ConfigError on the first problem found; checks that input paths exist.
  void validate() const {
    if (!seed)
      throw ConfigError("config is missing the required key 'seed'");
    const int sources = !dataset.empty() + !features_csv.empty() + synthetic.has_value();
    if (sources != 1)
      throw ConfigError("config needs exactly one of 'dataset', 'features_csv', 'synthetic'");
    if (!dataset.empty() && !std::filesystem::is_directory(dataset))
      throw ConfigError("dataset directory not found: " + dataset.string());
    if (!features_csv.empty() && !std::filesystem::is_regular_file(features_csv))
      throw ConfigError("features_csv not found: " + features_csv.string());
    if (!features_csv.empty() && subset != "all")
      throw ConfigError("subset selection needs record metadata; it is unavailable with features_csv");
    if (synthetic && (synthetic->n_per_class < 2 || synthetic->length < 64))
      throw ConfigError("synthetic needs n_per_class >= 2 and length >= 64");
    if (!(sample_rate > 0.0))
      throw ConfigError("sample_rate must be > 0");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
      throw ConfigError("train_fraction must lie in (0, 1)");
    if (out.empty())
      throw ConfigError("'out' must not be empty");
    features.validate();
    training.validate();
    try {
      auto spec = network;
      spec.input_length = static_cast<std::size_t>(features.nbins);
      spec.validate();
    } catch (const nn::ShapeError& e) {
      throw ConfigError(std::string("network: ") + e.what());
    }
  }

  /// Network spec with the input length implied by the feature grid.
  nn::NetworkSpec resolved_network() const {
    auto spec = network;
    spec.input_length = static_cast<std::size_t>(features.nbins);
    return spec;
  }

  nn::TrainConfig resolved_training() const {
    auto t = training;
    t.seed = seed.value_or(0);
    return t;
  }
};

namespace detail {

using json = nlohmann::json;

inline void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object())
    throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items())
    if (!allowed.contains(key))
      throw ConfigError("unknown key '" + key + "' in " + where);
}

template <class T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key))
    out = j.at(key).get<T>();
}

/// Absolute form of `p`, read relative to `base` (the config's directory).
inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return std::filesystem::absolute(path.is_absolute() ? path : base / path).lexically_normal();
}

inline const char* optimizer_name(nn::Optimizer o) {
  return o == nn::Optimizer::sgd ? "sgd" : "sgd_momentum";
}

} // namespace detail

/// Parses a config document; relative paths are resolved against `base`.
inline RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base = {}) {
  using detail::read_if;
  RunConfig c;
  try {
    detail::reject_unknown(j,
                           {"seed", "dataset", "features_csv", "synthetic", "sample_rate", "subset",
                            "train_fraction", "out", "features", "network", "training"},
                           "config");
    if (j.contains("seed")) {
      const auto& s = j.at("seed");
      if (!s.is_number_integer() || (!s.is_number_unsigned() && s.get<long long>() < 0))
        throw ConfigError("'seed' must be a non-negative integer");
      c.seed = s.get<std::uint64_t>();
    }
    if (j.contains("dataset"))
      c.dataset = detail::resolve(base, j.at("dataset").get<std::string>());
    if (j.contains("features_csv"))
      c.features_csv = detail::resolve(base, j.at("features_csv").get<std::string>());
    if (j.contains("synthetic")) {
      const auto& s = j.at("synthetic");
      detail::reject_unknown(s, {"n_per_class", "length"}, "synthetic");
      SyntheticSource src;
      read_if(s, "n_per_class", src.n_per_class);
      read_if(s, "length", src.length);
      c.synthetic = src;
    }
    read_if(j, "sample_rate", c.sample_rate);
    read_if(j, "subset", c.subset);
    read_if(j, "train_fraction", c.train_fraction);
    if (j.contains("out"))
      c.out = detail::resolve(base, j.at("out").get<std::string>());

    if (j.contains("features")) {
      const auto& f = j.at("features");
      detail::reject_unknown(f, {"ar_order", "nbins", "log_floor", "normalization"}, "features");
      read_if(f, "ar_order", c.features.ar_order);
      read_if(f, "nbins", c.features.nbins);
      read_if(f, "log_floor", c.features.log_floor);
      if (f.contains("normalization"))
        c.features.normalization = detail::normalization_from(f.at("normalization").get<std::string>());
    }
    if (j.contains("network")) {
      const auto& n = j.at("network");
      detail::reject_unknown(n, {"conv", "dense_units", "activation"}, "network");
      if (n.contains("conv")) {
        c.network.conv.clear();
        for (const auto& layer : n.at("conv")) {
          detail::reject_unknown(layer, {"filters", "kernel", "stride"}, "network.conv[]");
          nn::ConvSpec cs{0, 0, 1};
          cs.filters = layer.at("filters").get<std::size_t>();
          cs.kernel = layer.at("kernel").get<std::size_t>();
          read_if(layer, "stride", cs.stride);
          c.network.conv.push_back(cs);
        }
      }
      read_if(n, "dense_units", c.network.dense_units);
      if (n.contains("activation"))
        c.network.hidden_activation = detail::activation_from(n.at("activation").get<std::string>());
    }
    if (j.contains("training")) {
      const auto& t = j.at("training");
      detail::reject_unknown(t, {"epochs", "batch_size", "learning_rate", "momentum", "optimizer"},
                             "training");
      read_if(t, "epochs", c.training.epochs);
      read_if(t, "batch_size", c.training.batch_size);
      read_if(t, "learning_rate", c.training.learning_rate);
      read_if(t, "momentum", c.training.momentum);
      if (t.contains("optimizer")) {
        const auto name = t.at("optimizer").get<std::string>();
        if (name == "sgd")
          c.training.optimizer = nn::Optimizer::sgd;
        else if (name == "sgd_momentum")
          c.training.optimizer = nn::Optimizer::sgd_momentum;
        else
          throw ConfigError("unknown optimizer '" + name + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(j, path.parent_path());
}

/// Every field, defaults materialised. Parsing the result reproduces the config.
inline nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  if (c.seed)
    j["seed"] = *c.seed;
  if (!c.dataset.empty())
    j["dataset"] = c.dataset.string();
  if (!c.features_csv.empty())
    j["features_csv"] = c.features_csv.string();
  if (c.synthetic)
    j["synthetic"] = {{"n_per_class", c.synthetic->n_per_class}, {"length", c.synthetic->length}};
  j["sample_rate"] = c.sample_rate;
  j["subset"] = c.subset;
  j["train_fraction"] = c.train_fraction;
  j["out"] = c.out.string();
  j["features"] = feature_config_json(c.features);
  j["network"] = network_spec_json(c.network);
  j["training"] = {{"epochs", c.training.epochs},
                   {"batch_size", c.training.batch_size},
                   {"learning_rate", c.training.learning_rate},
                   {"momentum", c.training.momentum},
                   {"optimizer", detail::optimizer_name(c.training.optimizer)}};
  return j;
}

} // namespace emg
