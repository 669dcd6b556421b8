#pragma once

// Dense and 1D convolution layers with hand-written backward passes.
//
// Conv1d input is [in_channels, M] or a batch [B, in_channels, M]; weights are
// [filters, kernel, in_channels] and the output [(B,) filters, floor((M - kernel)/stride) + 1].
// Convolution is "valid" (no padding). Every input channel contributes to every
// filter, which is the multi-stream case: layer k consumes all feature maps of
// layer k - 1.

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "emg/nn/tensor.hpp"

namespace emg::nn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

enum class Activation { relu, identity };

class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

inline double activate(Activation a, double v) noexcept {
  return a == Activation::relu ? (v > 0.0 ? v : 0.0) : v;
}

/// Derivative expressed through the activation output.
inline double activation_grad(Activation a, double out) noexcept {
  return a == Activation::relu ? (out > 0.0 ? 1.0 : 0.0) : 1.0;
}

struct DenseLayer {
  Tensor weights; // [out, in]
  Tensor bias;    // [out]
  Activation activation = Activation::relu;

  DenseLayer() = default;
  DenseLayer(std::size_t in, std::size_t out, Activation act)
      : weights({out, in}), bias({out}), activation(act) {}

  std::size_t in_features() const { return weights.dim(1); }
  std::size_t out_features() const { return weights.dim(0); }
  bool operator==(const DenseLayer&) const = default;
};

struct Conv1dLayer {
  Tensor weights; // [filters, kernel, in_channels]
  Tensor bias;    // [filters]
  std::size_t stride = 1;
  Activation activation = Activation::relu;

  Conv1dLayer() = default;
  Conv1dLayer(std::size_t in_channels, std::size_t filters, std::size_t kernel, std::size_t stride_,
              Activation act)
      : weights({filters, kernel, in_channels}), bias({filters}), stride(stride_), activation(act) {
    if (stride == 0)
      throw ShapeError("stride must be >= 1");
    if (kernel == 0)
      throw ShapeError("kernel width must be >= 1");
  }

  std::size_t filters() const { return weights.dim(0); }
  std::size_t kernel() const { return weights.dim(1); }
  std::size_t in_channels() const { return weights.dim(2); }

  std::size_t output_length(std::size_t input_length) const {
    if (kernel() > input_length)
      throw ShapeError("kernel width " + std::to_string(kernel()) + " exceeds input length " +
                       std::to_string(input_length));
    return (input_length - kernel()) / stride + 1;
  }
  bool operator==(const Conv1dLayer&) const = default;
};

/// x is [in] or [batch, in]; the result has the same leading shape with `out` features.
inline Tensor dense_forward(const DenseLayer& layer, const Tensor& x) {
  const std::size_t in = layer.in_features();
  const std::size_t out = layer.out_features();
  if (x.rank() == 0 || x.rank() > 2 || x.shape.back() != in)
    throw ShapeError("dense layer expects input [..., " + std::to_string(in) + "], got " +
                     shape_string(x.shape));
  const std::size_t batch = x.rank() == 2 ? x.dim(0) : 1;
  Tensor y(x.rank() == 2 ? std::vector<std::size_t>{batch, out} : std::vector<std::size_t>{out});
  const auto ei = static_cast<Eigen::Index>(in), eo = static_cast<Eigen::Index>(out),
             eb = static_cast<Eigen::Index>(batch);
  ConstMatrixMap w(layer.weights.data(), eo, ei);
  ConstVectorMap b(layer.bias.data(), eo);
  ConstMatrixMap xs(x.data(), eb, ei);
  MatrixMap ys(y.data(), eb, eo);
  ys.noalias() = xs * w.transpose();
  ys.rowwise() += b.transpose();
  for (double& v : y.values)
    v = activate(layer.activation, v);
  return y;
}

/// x, y, dy are [in]/[out] or [B, in]/[B, out]. Accumulates the summed
/// gradient into `grad` and returns dL/dx shaped like x.
inline Tensor dense_backward(const DenseLayer& layer, const Tensor& x, const Tensor& y,
                             const Tensor& dy, DenseLayer& grad) {
  const auto in = static_cast<Eigen::Index>(layer.in_features());
  const auto out = static_cast<Eigen::Index>(layer.out_features());
  const auto batch = static_cast<Eigen::Index>(x.rank() == 2 ? x.dim(0) : 1);
  if (x.size() != static_cast<std::size_t>(batch * in) || y.size() != dy.size() ||
      y.size() != static_cast<std::size_t>(batch * out))
    throw ShapeError("dense backward shape mismatch: x " + shape_string(x.shape) + ", dy " +
                     shape_string(dy.shape));
  RowMatrix g(batch, out);
  for (std::size_t i = 0; i < y.size(); ++i)
    g.data()[i] = dy[i] * activation_grad(layer.activation, y[i]);
  ConstMatrixMap xs(x.data(), batch, in);
  MatrixMap(grad.weights.data(), out, in).noalias() += g.transpose() * xs;
  VectorMap(grad.bias.data(), out) += g.colwise().sum().transpose();
  Tensor dx(x.shape);
  MatrixMap(dx.data(), batch, in).noalias() = g * ConstMatrixMap(layer.weights.data(), out, in);
  return dx;
}

namespace detail {

struct ConvDims {
  std::size_t batch, m, len;
};

inline ConvDims conv_dims(const Conv1dLayer& layer, const Tensor& x) {
  const bool batched = x.rank() == 3;
  if ((x.rank() != 2 && !batched) || x.dim(batched ? 1 : 0) != layer.in_channels())
    throw ShapeError("conv1d expects input [" + std::to_string(layer.in_channels()) +
                     "xM] or [Bx" + std::to_string(layer.in_channels()) + "xM], got " +
                     shape_string(x.shape));
  const std::size_t m = x.shape.back();
  return {batched ? x.dim(0) : 1, m, layer.output_length(m)};
}

} // namespace detail

/// Column view of the input windows. Column b * L + s of the result holds the
/// window of example b at output position s, rows ordered (k, c) to match the
/// [kernel, in_channels] layout of one filter's weights:
/// patches[(k * C + c), b * L + s] = x[b][c][s * stride + k].
inline RowMatrix gather_patches(const Conv1dLayer& layer, const Tensor& x, std::size_t len) {
  const std::size_t m = x.shape.back();
  const std::size_t nk = layer.kernel(), nc = layer.in_channels(), z = layer.stride;
  const std::size_t batch = x.size() / (nc * m);
  const std::size_t cols = batch * len;
  RowMatrix patches(static_cast<Eigen::Index>(nk * nc), static_cast<Eigen::Index>(cols));
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t k = 0; k < nk; ++k)
      for (std::size_t c = 0; c < nc; ++c) {
        const double* src = x.data() + (b * nc + c) * m + k;
        double* dst = patches.data() + (k * nc + c) * cols + b * len;
        for (std::size_t s = 0; s < len; ++s)
          dst[s] = src[s * z];
      }
  return patches;
}

inline Tensor conv1d_forward(const Conv1dLayer& layer, const Tensor& x) {
  const auto [batch, m, len] = detail::conv_dims(layer, x);
  const std::size_t nf = layer.filters();
  const auto rows = static_cast<Eigen::Index>(layer.kernel() * layer.in_channels());
  const auto patches = gather_patches(layer, x, len);
  RowMatrix prod(static_cast<Eigen::Index>(nf), static_cast<Eigen::Index>(batch * len));
  prod.noalias() = ConstMatrixMap(layer.weights.data(), static_cast<Eigen::Index>(nf), rows) * patches;

  Tensor y(x.rank() == 3 ? std::vector<std::size_t>{batch, nf, len} : std::vector<std::size_t>{nf, len});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t f = 0; f < nf; ++f) {
      const double* src = prod.data() + f * batch * len + b * len;
      double* dst = y.data() + (b * nf + f) * len;
      const double bias = layer.bias[f];
      for (std::size_t s = 0; s < len; ++s)
        dst[s] = activate(layer.activation, src[s] + bias);
    }
  return y;
}

/// Accumulates the gradient summed over the batch into `grad`; returns dL/dx,
/// or an empty tensor when `input_grad` is false (first layer).
inline Tensor conv1d_backward(const Conv1dLayer& layer, const Tensor& x, const Tensor& y,
                              const Tensor& dy, Conv1dLayer& grad, bool input_grad = true) {
  const auto [batch, m, len] = detail::conv_dims(layer, x);
  const std::size_t nk = layer.kernel(), nc = layer.in_channels(), nf = layer.filters(),
                    z = layer.stride;
  if (y.size() != batch * nf * len || dy.size() != y.size())
    throw ShapeError("conv1d backward shape mismatch: y " + shape_string(y.shape) + ", dy " +
                     shape_string(dy.shape));
  const std::size_t cols = batch * len;
  const auto rows = static_cast<Eigen::Index>(nk * nc);

  // Same column order as the patches: [filters, B * L].
  RowMatrix g(static_cast<Eigen::Index>(nf), static_cast<Eigen::Index>(cols));
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t f = 0; f < nf; ++f) {
      const std::size_t src = (b * nf + f) * len;
      double* dst = g.data() + f * cols + b * len;
      for (std::size_t s = 0; s < len; ++s)
        dst[s] = dy[src + s] * activation_grad(layer.activation, y[src + s]);
    }
  const auto patches = gather_patches(layer, x, len);
  MatrixMap(grad.weights.data(), static_cast<Eigen::Index>(nf), rows).noalias() +=
      g * patches.transpose();
  VectorMap(grad.bias.data(), static_cast<Eigen::Index>(nf)) += g.rowwise().sum();
  if (!input_grad)
    return {};

  RowMatrix dpatches(rows, static_cast<Eigen::Index>(cols));
  dpatches.noalias() =
      ConstMatrixMap(layer.weights.data(), static_cast<Eigen::Index>(nf), rows).transpose() * g;
  Tensor dx(x.shape);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t k = 0; k < nk; ++k)
      for (std::size_t c = 0; c < nc; ++c) {
        const double* dp = dpatches.data() + (k * nc + c) * cols + b * len;
        double* dst = dx.data() + (b * nc + c) * m + k;
        for (std::size_t s = 0; s < len; ++s)
          dst[s * z] += dp[s];
      }
  return dx;
}

/// Applies a conv stack in order; each layer sees every feature map of the previous one.
inline Tensor multistream_forward(std::span<const Conv1dLayer> layers, const Tensor& x) {
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::size_t streams = h.rank() >= 2 ? h.dim(h.rank() - 2) : 0;
    if (streams != layers[i].in_channels())
      throw ShapeError("layer " + std::to_string(i) + " expects " +
                       std::to_string(layers[i].in_channels()) + " input streams, got " +
                       std::to_string(streams));
    h = conv1d_forward(layers[i], h);
  }
  return h;
}

/// Softmax over the last dimension with max subtraction.
inline Tensor softmax(const Tensor& logits) {
  if (logits.rank() == 0 || logits.shape.back() == 0)
    throw ShapeError("softmax needs a non-empty last dimension");
  const std::size_t k = logits.shape.back();
  Tensor out(logits.shape);
  for (std::size_t b = 0; b < logits.size() / k; ++b) {
    const double* l = logits.data() + b * k;
    double* p = out.data() + b * k;
    const double mx = *std::max_element(l, l + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      p[j] = std::exp(l[j] - mx);
      sum += p[j];
    }
    for (std::size_t j = 0; j < k; ++j)
      p[j] /= sum;
  }
  return out;
}

inline constexpr double kProbabilityFloor = 1e-12;

inline double cross_entropy(std::span<const double> probs, std::size_t label) {
  if (label >= probs.size())
    throw ShapeError("label index out of range");
  return -std::log(std::max(probs[label], kProbabilityFloor));
}

/// Mean loss over a [batch, classes] probability tensor.
inline double cross_entropy(const Tensor& probs, std::span<const std::size_t> labels) {
  const std::size_t k = probs.shape.back();
  if (probs.size() / k != labels.size())
    throw ShapeError("label count does not match batch size");
  double sum = 0.0;
  for (std::size_t b = 0; b < labels.size(); ++b)
    sum += cross_entropy(std::span<const double>(probs.data() + b * k, k), labels[b]);
  return sum / static_cast<double>(labels.size());
}

} // namespace emg::nn
