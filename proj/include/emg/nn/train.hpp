#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "emg/errors.hpp"
#include "emg/features.hpp"
#include "emg/metrics.hpp"
#include "emg/nn/network.hpp"
#include "emg/seeding.hpp"

namespace emg::nn {

enum class Optimizer { sgd, sgd_momentum };

struct TrainConfig {
  int epochs = 300;
  int batch_size = 32;
  double learning_rate = 0.01;
  double momentum = 0.9;
  Optimizer optimizer = Optimizer::sgd_momentum;
  std::uint64_t seed = 1;

  void validate() const {
    if (epochs < 1)
      throw ConfigError("epochs must be >= 1");
    if (batch_size < 1)
      throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
      throw ConfigError("learning_rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0))
      throw ConfigError("momentum must lie in [0, 1)");
  }
  bool operator==(const TrainConfig&) const = default;
};

struct EvalPass {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<std::size_t> predictions;
};

/// Loss, accuracy and argmax predictions, evaluated in chunks of `chunk` examples.
inline EvalPass evaluate(const NetworkState& net, std::span<const FeatureVector> set,
                         std::size_t chunk = 64) {
  EvalPass out;
  out.predictions.reserve(set.size());
  std::size_t correct = 0;
  const std::size_t k = net.spec.num_classes;
  for (std::size_t start = 0; start < set.size(); start += chunk) {
    const auto part = set.subspan(start, std::min(chunk, set.size() - start));
    const Trace t = forward(net, part);
    for (std::size_t b = 0; b < part.size(); ++b) {
      const std::span<const double> p(t.probs.data() + b * k, k);
      const std::size_t truth = index_of(part[b].label);
      out.loss += cross_entropy(p, truth);
      const auto pred = argmax(p);
      correct += pred == truth;
      out.predictions.push_back(pred);
    }
  }
  if (!set.empty()) {
    out.loss /= static_cast<double>(set.size());
    out.accuracy = static_cast<double>(correct) / static_cast<double>(set.size());
  }
  return out;
}

struct TrainResult {
  NetworkState state;
  metrics::EpochLog log;
  std::vector<std::size_t> final_test_predictions;
  /// Test predictions at the epoch of maximum test accuracy.
  std::vector<std::size_t> best_test_predictions;
  int best_epoch = 0;
};

/// One SGD step: p -= lr g, or with momentum v = mu v - lr g; p += v.
inline void apply_update(NetworkState& net, const NetworkState& grads, NetworkState& velocity,
                         const TrainConfig& cfg) {
  auto p = parameters(net);
  auto g = parameters(grads);
  auto v = parameters(velocity);
  for (std::size_t t = 0; t < p.size(); ++t) {
    auto& pv = p[t]->values;
    const auto& gv = g[t]->values;
    auto& vv = v[t]->values;
    if (cfg.optimizer == Optimizer::sgd_momentum) {
      for (std::size_t i = 0; i < pv.size(); ++i) {
        vv[i] = cfg.momentum * vv[i] - cfg.learning_rate * gv[i];
        pv[i] += vv[i];
      }
    } else {
      for (std::size_t i = 0; i < pv.size(); ++i)
        pv[i] -= cfg.learning_rate * gv[i];
    }
  }
}

/// Mini-batch training. Deterministic in cfg.seed: the initial weights use
/// the "init" sub-seed and the per-epoch shuffle the "shuffle" sub-seed.
/// Train loss/accuracy are measured after each epoch with the epoch's final weights.
inline TrainResult train(const NetworkSpec& spec, std::span<const FeatureVector> train_set,
                         std::span<const FeatureVector> test_set, const TrainConfig& cfg,
                         const std::function<void(const metrics::EpochStats&)>& on_epoch = {}) {
  cfg.validate();
  spec.validate();
  if (train_set.empty() || test_set.empty())
    throw DataError("training and test sets must be non-empty");
  for (const auto* set : {&train_set, &test_set})
    for (const auto& f : *set)
      if (f.channel1.size() != spec.input_length || f.channel2.size() != spec.input_length)
        throw DataError("feature dimension " + std::to_string(f.nbins()) +
                        " does not match network input " + std::to_string(spec.input_length));

  TrainResult result;
  result.state = make_network(spec);
  init_uniform_fan_in(result.state, derive_seed(cfg.seed, "init"));
  NetworkState velocity = zeros_like(result.state);
  NetworkState grads = zeros_like(result.state);

  std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, "shuffle"));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  std::vector<FeatureVector> minibatch;
  std::vector<std::size_t> labels;

  double best_acc = -1.0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      for (auto* t : parameters(grads))
        t->fill(0.0);
      minibatch.clear();
      labels.clear();
      for (std::size_t i = start; i < end; ++i) {
        minibatch.push_back(train_set[order[i]]);
        labels.push_back(index_of(train_set[order[i]].label));
      }
      const Trace t = forward(result.state, minibatch);
      accumulate_gradients(result.state, t, labels, grads, 1.0 / static_cast<double>(end - start));
      apply_update(result.state, grads, velocity, cfg);
    }

    const EvalPass tr = evaluate(result.state, train_set);
    EvalPass te = evaluate(result.state, test_set);
    if (!std::isfinite(tr.loss) || !std::isfinite(te.loss))
      throw DivergenceError(epoch, "non-finite loss");
    for (const auto* t : parameters(result.state))
      if (!t->all_finite())
        throw DivergenceError(epoch, "non-finite weights");

    metrics::EpochStats stats{epoch, tr.loss, tr.accuracy, te.loss, te.accuracy};
    result.log.push_back(stats);
    if (te.accuracy > best_acc) {
      best_acc = te.accuracy;
      result.best_epoch = epoch;
      result.best_test_predictions = te.predictions;
    }
    result.final_test_predictions = std::move(te.predictions);
    if (on_epoch)
      on_epoch(stats);
  }
  return result;
}

} // namespace emg::nn
