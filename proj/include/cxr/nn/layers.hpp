#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cxr/core/random.hpp"
#include "cxr/nn/kernels.hpp"
#include "cxr/nn/tensor.hpp"

namespace cxr::nn {

enum class Mode { train, eval };

/// Named view of a trainable parameter (grad set) or a state buffer (grad null).
template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value = nullptr;
  Tensor<T>* grad = nullptr;

  bool trainable() const { return grad != nullptr; }
};

inline std::string join_name(const std::string& prefix, const std::string& name) {
  if (prefix.empty()) return name;
  if (name.empty()) return prefix;
  return prefix + "." + name;
}

/// A differentiable module. forward() in train mode caches whatever backward()
/// needs; backward() accumulates parameter gradients and returns the gradient
/// with respect to the forward input.
template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
  virtual void collect(const std::string& /*prefix*/, std::vector<ParamRef<T>>& /*out*/) {}
};

template <typename T>
using LayerPtr = std::unique_ptr<Layer<T>>;

template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(int in_channels, int out_channels, Window window, bool with_bias, Rng& rng)
      : window_(window),
        weight_({out_channels, in_channels, window.kernel_h, window.kernel_w}),
        grad_weight_(weight_.shape()) {
    const double fan_in = static_cast<double>(in_channels) * window.kernel_h * window.kernel_w;
    const double bound = std::sqrt(6.0 / fan_in);
    for (auto& v : weight_.values()) v = static_cast<T>(rng.uniform(-bound, bound));
    if (with_bias) {
      bias_ = Tensor<T>({out_channels});
      grad_bias_ = Tensor<T>({out_channels});
    }
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    if (mode == Mode::train) input_ = x;
    return conv2d(x, weight_, bias_, window_);
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    return conv2d_backward(input_, weight_, grad_out, window_, grad_weight_,
                           bias_.empty() ? nullptr : &grad_bias_);
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) override {
    out.push_back({join_name(prefix, "weight"), &weight_, &grad_weight_});
    if (!bias_.empty()) out.push_back({join_name(prefix, "bias"), &bias_, &grad_bias_});
  }

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  Window window_;
  Tensor<T> weight_, grad_weight_;
  Tensor<T> bias_, grad_bias_;
  Tensor<T> input_;
};

/// Batch normalisation over (N, H, W) per channel. Running statistics follow
/// the exponential update running = (1 - momentum) * running + momentum * batch,
/// with the unbiased batch variance.
template <typename T>
class BatchNorm2d final : public Layer<T> {
 public:
  explicit BatchNorm2d(int channels, double eps = 1e-5, double momentum = 0.1)
      : eps_(eps),
        momentum_(momentum),
        gamma_({channels}, T{1}),
        beta_({channels}),
        grad_gamma_({channels}),
        grad_beta_({channels}),
        running_mean_({channels}),
        running_var_({channels}, T{1}) {}

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    const int n = x.dim(0), c = x.dim(1);
    const std::size_t spatial = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    const std::size_t count = static_cast<std::size_t>(n) * spatial;
    Tensor<T> y(x.shape());
    if (mode == Mode::eval) {
      for (int ch = 0; ch < c; ++ch) {
        const T inv = T{1} / std::sqrt(running_var_[ch] + static_cast<T>(eps_));
        const T scale = gamma_[ch] * inv;
        const T shift = beta_[ch] - running_mean_[ch] * scale;
        for (int b = 0; b < n; ++b) {
          const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * spatial;
          for (std::size_t i = 0; i < spatial; ++i) y[off + i] = x[off + i] * scale + shift;
        }
      }
      return y;
    }
    normalized_ = Tensor<T>(x.shape());
    inv_std_.assign(static_cast<std::size_t>(c), T{0});
    for (int ch = 0; ch < c; ++ch) {
      double sum = 0.0;
      for (int b = 0; b < n; ++b) {
        const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) sum += x[off + i];
      }
      const double mean = sum / static_cast<double>(count);
      double sq = 0.0;
      for (int b = 0; b < n; ++b) {
        const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) {
          const double d = x[off + i] - mean;
          sq += d * d;
        }
      }
      const double var = sq / static_cast<double>(count);
      const T inv = static_cast<T>(1.0 / std::sqrt(var + eps_));
      inv_std_[static_cast<std::size_t>(ch)] = inv;
      for (int b = 0; b < n; ++b) {
        const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) {
          const T xhat = (x[off + i] - static_cast<T>(mean)) * inv;
          normalized_[off + i] = xhat;
          y[off + i] = gamma_[ch] * xhat + beta_[ch];
        }
      }
      const double unbiased = count > 1 ? sq / static_cast<double>(count - 1) : var;
      running_mean_[ch] = static_cast<T>((1.0 - momentum_) * running_mean_[ch] + momentum_ * mean);
      running_var_[ch] = static_cast<T>((1.0 - momentum_) * running_var_[ch] + momentum_ * unbiased);
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    const int n = grad_out.dim(0), c = grad_out.dim(1);
    const std::size_t spatial = static_cast<std::size_t>(grad_out.dim(2)) * grad_out.dim(3);
    const double count = static_cast<double>(n) * static_cast<double>(spatial);
    Tensor<T> grad_in(grad_out.shape());
    for (int ch = 0; ch < c; ++ch) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int b = 0; b < n; ++b) {
        const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) {
          sum_dy += grad_out[off + i];
          sum_dy_xhat += static_cast<double>(grad_out[off + i]) * normalized_[off + i];
        }
      }
      grad_gamma_[ch] += static_cast<T>(sum_dy_xhat);
      grad_beta_[ch] += static_cast<T>(sum_dy);
      const double k = static_cast<double>(gamma_[ch]) * inv_std_[static_cast<std::size_t>(ch)] / count;
      for (int b = 0; b < n; ++b) {
        const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) {
          grad_in[off + i] = static_cast<T>(
              k * (count * grad_out[off + i] - sum_dy - normalized_[off + i] * sum_dy_xhat));
        }
      }
    }
    return grad_in;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) override {
    out.push_back({join_name(prefix, "weight"), &gamma_, &grad_gamma_});
    out.push_back({join_name(prefix, "bias"), &beta_, &grad_beta_});
    out.push_back({join_name(prefix, "running_mean"), &running_mean_, nullptr});
    out.push_back({join_name(prefix, "running_var"), &running_var_, nullptr});
  }

 private:
  double eps_;
  double momentum_;
  Tensor<T> gamma_, beta_, grad_gamma_, grad_beta_;
  Tensor<T> running_mean_, running_var_;
  Tensor<T> normalized_;
  std::vector<T> inv_std_;
};

template <typename T>
class ReLU final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    Tensor<T> y = x;
    for (auto& v : y.values()) v = v < T{0} ? T{0} : v;
    if (mode == Mode::train) output_ = y;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    Tensor<T> g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!(output_[i] > T{0})) g[i] = T{0};
    return g;
  }

 private:
  Tensor<T> output_;
};

template <typename T>
class MaxPool2d final : public Layer<T> {
 public:
  explicit MaxPool2d(Window window) : window_(window) {}

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    if (mode == Mode::eval) return max_pool2d(x, window_);
    in_shape_ = x.shape();
    return max_pool2d(x, window_, &argmax_);
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    Tensor<T> grad_in(in_shape_);
    for (std::size_t i = 0; i < grad_out.size(); ++i) grad_in[argmax_[i]] += grad_out[i];
    return grad_in;
  }

 private:
  Window window_;
  Shape in_shape_;
  std::vector<std::uint32_t> argmax_;
};

template <typename T>
class AvgPool2d final : public Layer<T> {
 public:
  AvgPool2d(Window window, bool count_pad) : window_(window), count_pad_(count_pad) {}

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    if (mode == Mode::train) in_shape_ = x.shape();
    return avg_pool2d(x, window_, count_pad_);
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    return avg_pool2d_backward(grad_out, in_shape_, window_, count_pad_);
  }

 private:
  Window window_;
  bool count_pad_;
  Shape in_shape_;
};

/// NCHW -> [N, C].
template <typename T>
class GlobalAvgPool final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    if (mode == Mode::train) in_shape_ = x.shape();
    return global_avg_pool2d(x);
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    Tensor<T> grad_in(in_shape_);
    const std::size_t spatial = static_cast<std::size_t>(in_shape_[2]) * in_shape_[3];
    const T scale = T{1} / static_cast<T>(spatial);
    for (std::size_t p = 0; p < grad_out.size(); ++p) {
      const T g = grad_out[p] * scale;
      std::fill(grad_in.data() + p * spatial, grad_in.data() + (p + 1) * spatial, g);
    }
    return grad_in;
  }

 private:
  Shape in_shape_;
};

/// Inverted dropout: kept activations are scaled by 1 / (1 - rate) in training.
template <typename T>
class Dropout final : public Layer<T> {
 public:
  Dropout(double rate, std::uint64_t seed) : rate_(rate), rng_(seed) {
    if (rate < 0.0 || rate >= 1.0) throw ShapeError("dropout rate must be in [0, 1)");
  }

  void reseed(std::uint64_t seed) { rng_ = Rng(seed); }
  double rate() const { return rate_; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    if (mode == Mode::eval || rate_ == 0.0) {
      mask_.clear();
      return x;
    }
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate_));
    mask_.assign(x.size(), T{0});
    Tensor<T> y = x;
    for (std::size_t i = 0; i < y.size(); ++i) {
      mask_[i] = rng_.bernoulli(rate_) ? T{0} : keep_scale;
      y[i] *= mask_[i];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    if (mask_.empty()) return grad_out;
    Tensor<T> g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= mask_[i];
    return g;
  }

 private:
  double rate_;
  Rng rng_;
  std::vector<T> mask_;
};

/// Fully connected layer on [N, in] with weight [out, in].
template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(int in_features, int out_features, Rng& rng)
      : weight_({out_features, in_features}),
        bias_({out_features}),
        grad_weight_(weight_.shape()),
        grad_bias_(bias_.shape()) {
    const double bound = std::sqrt(6.0 / (in_features + out_features));
    for (auto& v : weight_.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    if (x.rank() != 2 || x.dim(1) != weight_.dim(1)) {
      throw ShapeError("dense layer expects [N, " + std::to_string(weight_.dim(1)) + "], got " +
                       to_string(x.shape()));
    }
    if (mode == Mode::train) input_ = x;
    const int n = x.dim(0), in = weight_.dim(1), out = weight_.dim(0);
    Tensor<T> y({n, out});
    MatrixMap<T> ym(y.data(), n, out);
    ym.noalias() = ConstMatrixMap<T>(x.data(), n, in) *
                   ConstMatrixMap<T>(weight_.data(), out, in).transpose();
    for (int r = 0; r < n; ++r)
      for (int o = 0; o < out; ++o) ym(r, o) += bias_[o];
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    const int n = input_.dim(0), in = weight_.dim(1), out = weight_.dim(0);
    ConstMatrixMap<T> gy(grad_out.data(), n, out);
    MatrixMap<T>(grad_weight_.data(), out, in).noalias() +=
        gy.transpose() * ConstMatrixMap<T>(input_.data(), n, in);
    for (int o = 0; o < out; ++o) grad_bias_[o] += gy.col(o).sum();
    Tensor<T> grad_in({n, in});
    MatrixMap<T>(grad_in.data(), n, in).noalias() =
        gy * ConstMatrixMap<T>(weight_.data(), out, in);
    return grad_in;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) override {
    out.push_back({join_name(prefix, "weight"), &weight_, &grad_weight_});
    out.push_back({join_name(prefix, "bias"), &bias_, &grad_bias_});
  }

 private:
  Tensor<T> weight_, bias_, grad_weight_, grad_bias_;
  Tensor<T> input_;
};

/// Ordered chain of named children. An empty child name contributes no
/// segment to parameter names.
template <typename T>
class Sequential final : public Layer<T> {
 public:
  Sequential& add(std::string name, LayerPtr<T> layer) {
    children_.emplace_back(std::move(name), std::move(layer));
    return *this;
  }

  template <typename L, typename... Args>
  Sequential& emplace(std::string name, Args&&... args) {
    return add(std::move(name), std::make_unique<L>(std::forward<Args>(args)...));
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    Tensor<T> y = x;
    for (auto& [name, layer] : children_) y = layer->forward(y, mode);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    Tensor<T> g = grad_out;
    for (auto it = children_.rbegin(); it != children_.rend(); ++it) g = it->second->backward(g);
    return g;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) override {
    for (auto& [name, layer] : children_) layer->collect(join_name(prefix, name), out);
  }

  std::size_t size() const { return children_.size(); }

 private:
  std::vector<std::pair<std::string, LayerPtr<T>>> children_;
};

/// Parallel branches over the same input, concatenated along channels.
template <typename T>
class Concat final : public Layer<T> {
 public:
  Concat& add(std::string name, LayerPtr<T> branch) {
    branches_.emplace_back(std::move(name), std::move(branch));
    return *this;
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    std::vector<Tensor<T>> outs;
    outs.reserve(branches_.size());
    for (auto& [name, branch] : branches_) outs.push_back(branch->forward(x, mode));
    const int n = outs.front().dim(0), h = outs.front().dim(2), w = outs.front().dim(3);
    int total = 0;
    channels_.clear();
    for (const auto& o : outs) {
      if (o.dim(0) != n || o.dim(2) != h || o.dim(3) != w) {
        throw ShapeError("concat branch shape " + to_string(o.shape()) + " does not match " +
                         to_string(outs.front().shape()));
      }
      channels_.push_back(o.dim(1));
      total += o.dim(1);
    }
    Tensor<T> y({n, total, h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int b = 0; b < n; ++b) {
      T* dst = y.data() + static_cast<std::size_t>(b) * total * plane;
      for (const auto& o : outs) {
        const std::size_t chunk = static_cast<std::size_t>(o.dim(1)) * plane;
        const T* src = o.data() + static_cast<std::size_t>(b) * chunk;
        dst = std::copy(src, src + chunk, dst);
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    const int n = grad_out.dim(0), total = grad_out.dim(1), h = grad_out.dim(2), w = grad_out.dim(3);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    Tensor<T> grad_in;
    int first = 0;
    for (std::size_t i = 0; i < branches_.size(); ++i) {
      const int ch = channels_[i];
      Tensor<T> g({n, ch, h, w});
      for (int b = 0; b < n; ++b) {
        const T* src = grad_out.data() + (static_cast<std::size_t>(b) * total + first) * plane;
        std::copy(src, src + static_cast<std::size_t>(ch) * plane,
                  g.data() + static_cast<std::size_t>(b) * ch * plane);
      }
      Tensor<T> gi = branches_[i].second->backward(g);
      if (grad_in.empty()) {
        grad_in = std::move(gi);
      } else {
        grad_in += gi;
      }
      first += ch;
    }
    return grad_in;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) override {
    for (auto& [name, branch] : branches_) branch->collect(join_name(prefix, name), out);
  }

 private:
  std::vector<std::pair<std::string, LayerPtr<T>>> branches_;
  std::vector<int> channels_;
};

/// y = shortcut(x) + scale * main(x), optionally followed by ReLU. A missing
/// shortcut is the identity. The main branch shares the block's name prefix.
template <typename T>
class Residual final : public Layer<T> {
 public:
  Residual(LayerPtr<T> main, std::string shortcut_name, LayerPtr<T> shortcut, double scale,
           bool relu)
      : main_(std::move(main)),
        shortcut_name_(std::move(shortcut_name)),
        shortcut_(std::move(shortcut)),
        scale_(static_cast<T>(scale)),
        relu_(relu) {}

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    Tensor<T> y = main_->forward(x, mode);
    const Tensor<T> skip = shortcut_ ? shortcut_->forward(x, mode) : x;
    skip.require_same_shape(y, "residual add");
    for (std::size_t i = 0; i < y.size(); ++i) {
      const T v = skip[i] + scale_ * y[i];
      y[i] = (relu_ && v < T{0}) ? T{0} : v;
    }
    if (mode == Mode::train && relu_) output_ = y;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    Tensor<T> g = grad_out;
    if (relu_) {
      for (std::size_t i = 0; i < g.size(); ++i)
        if (!(output_[i] > T{0})) g[i] = T{0};
    }
    Tensor<T> gm = g;
    if (scale_ != T{1}) gm *= scale_;
    Tensor<T> grad_in = main_->backward(gm);
    grad_in += shortcut_ ? shortcut_->backward(g) : g;
    return grad_in;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) override {
    main_->collect(prefix, out);
    if (shortcut_) shortcut_->collect(join_name(prefix, shortcut_name_), out);
  }

 private:
  LayerPtr<T> main_;
  std::string shortcut_name_;
  LayerPtr<T> shortcut_;
  T scale_;
  bool relu_;
  Tensor<T> output_;
};

}  // namespace cxr::nn
