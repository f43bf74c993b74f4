#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "cxr/nn/kernels.hpp"
#include "cxr/nn/tensor.hpp"

namespace cxr::nn {

enum class Activation { identity, relu };

namespace detail {

/// Promote a CHW tensor to a single-sample NCHW batch.
template <typename T>
Tensor<T> as_batch(const Tensor<T>& x, const char* who) {
  if (x.rank() == 4) return x;
  if (x.rank() == 3) return x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)});
  throw ShapeError(std::string(who) + " expects CHW or NCHW input, got " + to_string(x.shape()));
}

template <typename T>
Tensor<T> restore_rank(Tensor<T> y, int rank) {
  if (rank == 4) return y;
  return y.reshaped({y.dim(1), y.dim(2), y.dim(3)});
}

}  // namespace detail

template <typename T>
Tensor<T> relu(Tensor<T> x) {
  for (auto& v : x.values()) v = v < T{0} ? T{0} : v;
  return x;
}

/// One convolutional layer: every output map j is
/// f(sum over input maps a of (w_j * y_a) + b_j), with valid padding.
///
/// `kernels` is [out_maps, in_maps, k, k] with k in {3, 5}; `bias` is
/// [out_maps]. Input is CHW or NCHW; the output has the same rank.
template <typename T>
Tensor<T> conv_forward(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias,
                       int stride, Activation activation) {
  if (kernels.rank() != 4 || kernels.dim(2) != kernels.dim(3) ||
      (kernels.dim(2) != 3 && kernels.dim(2) != 5)) {
    throw ShapeError("conv_forward expects square 3x3 or 5x5 kernels, got " +
                     to_string(kernels.shape()));
  }
  if (stride < 1) throw ShapeError("conv_forward stride must be >= 1");
  if (bias.size() != static_cast<std::size_t>(kernels.dim(0))) {
    throw ShapeError("conv_forward bias has " + std::to_string(bias.size()) +
                     " entries for " + std::to_string(kernels.dim(0)) + " kernels");
  }
  const Tensor<T> batch = detail::as_batch(input, "conv_forward");
  if (batch.dim(1) != kernels.dim(1)) {
    throw ShapeError("conv_forward: kernels expect " + std::to_string(kernels.dim(1)) +
                     " input maps, input has " + std::to_string(batch.dim(1)));
  }
  Tensor<T> y = conv2d(batch, kernels, bias, Window::square(kernels.dim(2), stride, 0));
  if (activation == Activation::relu) y = relu(std::move(y));
  return detail::restore_rank(std::move(y), input.rank());
}

/// Numerically stable softmax: the maximum is subtracted before exponentiating.
template <typename T>
std::vector<T> softmax(std::span<const T> scores) {
  std::vector<T> out(scores.begin(), scores.end());
  if (out.empty()) return out;
  const T peak = *std::max_element(out.begin(), out.end());
  T total{0};
  for (auto& v : out) {
    v = std::exp(v - peak);
    total += v;
  }
  for (auto& v : out) v /= total;
  return out;
}

/// Row-wise softmax of a [N, m] score matrix.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& scores) {
  if (scores.rank() != 2) throw ShapeError("softmax_rows expects [N, m], got " + to_string(scores.shape()));
  Tensor<T> out(scores.shape());
  const int m = scores.dim(1);
  for (int r = 0; r < scores.dim(0); ++r) {
    const auto row = softmax<T>(scores.values().subspan(static_cast<std::size_t>(r) * m, m));
    std::copy(row.begin(), row.end(), out.data() + static_cast<std::size_t>(r) * m);
  }
  return out;
}

/// Per-window maximum without padding. Input is CHW or NCHW.
template <typename T>
Tensor<T> max_pool(const Tensor<T>& input, int window, int stride) {
  if (window < 1 || stride < 1) throw ShapeError("max_pool window and stride must be >= 1");
  const Tensor<T> batch = detail::as_batch(input, "max_pool");
  return detail::restore_rank(max_pool2d(batch, Window::square(window, stride, 0)), input.rank());
}

/// Per-channel spatial mean. CHW input yields [C]; NCHW yields [N, C].
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input) {
  const Tensor<T> batch = detail::as_batch(input, "global_avg_pool");
  Tensor<T> pooled = global_avg_pool2d(batch);
  if (input.rank() == 3) return pooled.reshaped({pooled.dim(1)});
  return pooled;
}

}  // namespace cxr::nn
