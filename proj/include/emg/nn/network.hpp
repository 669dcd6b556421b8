#pragma once

// Two-channel network: each electrode channel feeds its own conv stack and
// dense layer; the two dense outputs are concatenated (channel 1 first) and a
// dense head maps them to class logits followed by softmax.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "emg/features.hpp"
#include "emg/labels.hpp"
#include "emg/nn/layers.hpp"
#include "emg/nn/tensor.hpp"

namespace emg::nn {

struct ConvSpec {
  std::size_t filters = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  bool operator==(const ConvSpec&) const = default;
};

/// Hyperparameters shared by both channel stacks.
struct NetworkSpec {
  std::size_t input_length = 128;
  std::vector<ConvSpec> conv = {{32, 5, 1}, {64, 5, 2}};
  std::size_t dense_units = 64;
  std::size_t num_classes = kNumClasses;
  Activation hidden_activation = Activation::relu;

  bool operator==(const NetworkSpec&) const = default;

  /// Feature-map length after each conv layer; throws ShapeError if a kernel
  /// no longer fits.
  std::vector<std::size_t> conv_output_lengths() const {
    std::vector<std::size_t> out;
    std::size_t m = input_length;
    for (std::size_t i = 0; i < conv.size(); ++i) {
      const auto& c = conv[i];
      if (c.filters == 0 || c.kernel == 0 || c.stride == 0)
        throw ShapeError("conv layer " + std::to_string(i) + " has a zero dimension");
      if (c.kernel > m)
        throw ShapeError("conv layer " + std::to_string(i) + ": kernel " + std::to_string(c.kernel) +
                         " exceeds input length " + std::to_string(m));
      m = (m - c.kernel) / c.stride + 1;
      out.push_back(m);
    }
    return out;
  }

  std::size_t flattened_size() const {
    const auto lengths = conv_output_lengths();
    if (conv.empty())
      return input_length;
    return conv.back().filters * lengths.back();
  }

  void validate() const {
    if (input_length == 0 || dense_units == 0 || num_classes < 2)
      throw ShapeError("network dimensions must be positive (and at least 2 classes)");
    (void)flattened_size();
  }
};

struct ChannelStack {
  std::vector<Conv1dLayer> convs;
  DenseLayer dense;
  bool operator==(const ChannelStack&) const = default;
};

struct NetworkState {
  NetworkSpec spec;
  std::array<ChannelStack, 2> channels;
  DenseLayer head;
  bool operator==(const NetworkState&) const = default;
};

/// All-zero parameters with the shapes implied by `spec`.
inline NetworkState make_network(const NetworkSpec& spec) {
  spec.validate();
  NetworkState net;
  net.spec = spec;
  for (auto& ch : net.channels) {
    std::size_t in_ch = 1;
    for (const auto& c : spec.conv) {
      ch.convs.emplace_back(in_ch, c.filters, c.kernel, c.stride, spec.hidden_activation);
      in_ch = c.filters;
    }
    ch.dense = DenseLayer(spec.flattened_size(), spec.dense_units, spec.hidden_activation);
  }
  net.head = DenseLayer(2 * spec.dense_units, spec.num_classes, Activation::identity);
  return net;
}

/// Parameter tensors in a fixed order: channel 1 stack (conv weights/bias
/// per layer, dense weights/bias), channel 2 stack, head.
inline std::vector<Tensor*> parameters(NetworkState& net) {
  std::vector<Tensor*> out;
  for (auto& ch : net.channels) {
    for (auto& c : ch.convs) {
      out.push_back(&c.weights);
      out.push_back(&c.bias);
    }
    out.push_back(&ch.dense.weights);
    out.push_back(&ch.dense.bias);
  }
  out.push_back(&net.head.weights);
  out.push_back(&net.head.bias);
  return out;
}

inline std::vector<const Tensor*> parameters(const NetworkState& net) {
  std::vector<const Tensor*> out;
  for (auto* t : parameters(const_cast<NetworkState&>(net)))
    out.push_back(t);
  return out;
}

inline std::size_t parameter_count(const NetworkState& net) {
  std::size_t n = 0;
  for (const auto* t : parameters(net))
    n += t->size();
  return n;
}

inline NetworkState zeros_like(const NetworkState& net) {
  NetworkState z = net;
  for (auto* t : parameters(z))
    t->fill(0.0);
  return z;
}

/// Weights and biases uniform in +-1/sqrt(fan_in).
inline void init_uniform_fan_in(NetworkState& net, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto fill = [&](Tensor& t, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : t.values)
      v = dist(rng);
  };
  for (auto& ch : net.channels) {
    for (auto& c : ch.convs) {
      fill(c.weights, c.kernel() * c.in_channels());
      fill(c.bias, c.kernel() * c.in_channels());
    }
    fill(ch.dense.weights, ch.dense.in_features());
    fill(ch.dense.bias, ch.dense.in_features());
  }
  fill(net.head.weights, net.head.in_features());
  fill(net.head.bias, net.head.in_features());
}

/// Intermediate activations of one forward pass over a batch of B examples.
/// Every tensor carries the batch as its leading dimension.
struct Trace {
  /// Per channel: input [B, 1, M] followed by every conv output [B, F, L].
  std::array<std::vector<Tensor>, 2> maps;
  std::array<Tensor, 2> flat;  // [B, F * L]
  std::array<Tensor, 2> dense; // [B, units]
  Tensor fused;                // [B, 2 * units], channel 1 first
  Tensor logits;
  Tensor probs;
  std::size_t batch() const { return probs.dim(0); }
};

namespace detail {

inline Trace forward_rows(const NetworkState& net, std::size_t batch,
                          const std::function<std::span<const double>(std::size_t, std::size_t)>& row) {
  const std::size_t m = net.spec.input_length;
  if (batch == 0)
    throw ShapeError("empty batch");
  Trace t;
  const std::size_t units = net.spec.dense_units;
  for (std::size_t c = 0; c < 2; ++c) {
    Tensor input({batch, 1, m});
    for (std::size_t b = 0; b < batch; ++b) {
      const auto r = row(b, c);
      if (r.size() != m)
        throw ShapeError("network expects " + std::to_string(m) + " features per channel, got " +
                         std::to_string(r.size()));
      std::copy(r.begin(), r.end(), input.values.begin() + b * m);
    }
    auto& maps = t.maps[c];
    maps.push_back(std::move(input));
    for (const auto& layer : net.channels[c].convs)
      maps.push_back(conv1d_forward(layer, maps.back()));
    t.flat[c] = Tensor({batch, maps.back().size() / batch}, maps.back().values);
    t.dense[c] = dense_forward(net.channels[c].dense, t.flat[c]);
  }
  t.fused = Tensor({batch, 2 * units});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < 2; ++c)
      std::copy_n(t.dense[c].values.begin() + b * units, units,
                  t.fused.values.begin() + (2 * b + c) * units);
  t.logits = dense_forward(net.head, t.fused);
  t.probs = softmax(t.logits);
  return t;
}

} // namespace detail

inline Trace forward(const NetworkState& net, std::span<const FeatureVector> batch) {
  return detail::forward_rows(net, batch.size(), [&](std::size_t b, std::size_t c) {
    return std::span<const double>(c == 0 ? batch[b].channel1 : batch[b].channel2);
  });
}

/// Single example as a batch of one.
inline Trace forward(const NetworkState& net, std::span<const double> ch1, std::span<const double> ch2) {
  return detail::forward_rows(net, 1, [&](std::size_t, std::size_t c) { return c == 0 ? ch1 : ch2; });
}

inline Trace forward(const NetworkState& net, const FeatureVector& f) {
  return forward(net, f.channel1, f.channel2);
}

/// Accumulates scale * sum over the batch of dLoss/dParams into `grads`.
inline void accumulate_gradients(const NetworkState& net, const Trace& t,
                                 std::span<const std::size_t> labels, NetworkState& grads,
                                 double scale = 1.0) {
  const std::size_t k = net.spec.num_classes;
  const std::size_t batch = t.batch();
  if (labels.size() != batch)
    throw ShapeError("label count does not match batch size");
  Tensor dlogits(t.probs.shape);
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] >= k)
      throw ShapeError("label index out of range");
    for (std::size_t j = 0; j < k; ++j)
      dlogits[b * k + j] = scale * (t.probs[b * k + j] - (j == labels[b] ? 1.0 : 0.0));
  }

  const Tensor dfused = dense_backward(net.head, t.fused, t.logits, dlogits, grads.head);
  const std::size_t units = net.spec.dense_units;
  for (std::size_t c = 0; c < 2; ++c) {
    const auto& stack = net.channels[c];
    auto& gstack = grads.channels[c];
    Tensor ddense({batch, units});
    for (std::size_t b = 0; b < batch; ++b)
      std::copy_n(dfused.values.begin() + (2 * b + c) * units, units,
                  ddense.values.begin() + b * units);
    Tensor dflat = dense_backward(stack.dense, t.flat[c], t.dense[c], ddense, gstack.dense);
    Tensor dmap(t.maps[c].back().shape, std::move(dflat.values));
    for (std::size_t i = stack.convs.size(); i-- > 0;)
      dmap = conv1d_backward(stack.convs[i], t.maps[c][i], t.maps[c][i + 1], dmap, gstack.convs[i],
                             i > 0);
  }
}

inline std::vector<std::size_t> label_indices(std::span<const FeatureVector> set) {
  std::vector<std::size_t> out;
  out.reserve(set.size());
  for (const auto& f : set)
    out.push_back(index_of(f.label));
  return out;
}

struct LossAndGradients {
  double loss = 0.0;
  NetworkState gradients;
};

/// Mean cross-entropy over the batch and its gradient with respect to every parameter.
inline LossAndGradients backward(const NetworkState& net, std::span<const FeatureVector> batch) {
  if (batch.empty())
    throw ShapeError("empty batch");
  LossAndGradients out{0.0, zeros_like(net)};
  const double scale = 1.0 / static_cast<double>(batch.size());
  const Trace t = forward(net, batch);
  const auto labels = label_indices(batch);
  out.loss = cross_entropy(t.probs, labels);
  accumulate_gradients(net, t, labels, out.gradients, scale);
  return out;
}

inline double batch_loss(const NetworkState& net, std::span<const FeatureVector> batch) {
  return cross_entropy(forward(net, batch).probs, label_indices(batch));
}

/// Index of the largest value; the lowest index wins ties.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < v.size(); ++j)
    if (v[j] > v[best])
      best = j;
  return best;
}

struct Prediction {
  ClassLabel label;
  std::vector<double> probabilities;
};

inline Prediction predict(const NetworkState& net, const FeatureVector& f) {
  const Trace t = forward(net, f);
  return {label_from_index(argmax(t.probs.values)), t.probs.values};
}

} // namespace emg::nn
