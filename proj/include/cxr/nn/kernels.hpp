#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "cxr/nn/tensor.hpp"

namespace cxr::nn {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

/// Kernel extent, stride and zero padding of a 2-D sliding window.
struct Window {
  int kernel_h = 1;
  int kernel_w = 1;
  int stride_h = 1;
  int stride_w = 1;
  int pad_h = 0;
  int pad_w = 0;

  static Window square(int kernel, int stride = 1, int pad = 0) {
    return {kernel, kernel, stride, stride, pad, pad};
  }

  int out_h(int in_h) const { return (in_h + 2 * pad_h - kernel_h) / stride_h + 1; }
  int out_w(int in_w) const { return (in_w + 2 * pad_w - kernel_w) / stride_w + 1; }

  bool pointwise() const {
    return kernel_h == 1 && kernel_w == 1 && stride_h == 1 && stride_w == 1 && pad_h == 0 &&
           pad_w == 0;
  }

  void check_fits(int in_h, int in_w, const char* who) const {
    if (in_h + 2 * pad_h < kernel_h || in_w + 2 * pad_w < kernel_w) {
      throw ShapeError(std::string(who) + ": input " + std::to_string(in_h) + "x" +
                       std::to_string(in_w) + " smaller than window " +
                       std::to_string(kernel_h) + "x" + std::to_string(kernel_w));
    }
  }
};

namespace detail {

/// Unfold one CHW image into a (C*kh*kw) x (out_h*out_w) column matrix.
template <typename T>
void im2col(const T* image, int channels, int h, int w, const Window& win, T* cols) {
  const int oh = win.out_h(h);
  const int ow = win.out_w(w);
  for (int c = 0; c < channels; ++c) {
    const T* plane = image + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < win.kernel_h; ++ki) {
      for (int kj = 0; kj < win.kernel_w; ++kj) {
        T* row = cols + ((static_cast<std::size_t>(c) * win.kernel_h + ki) * win.kernel_w + kj) *
                            static_cast<std::size_t>(oh) * ow;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * win.stride_h - win.pad_h + ki;
          T* dst = row + static_cast<std::size_t>(y) * ow;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, T{0});
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * w;
          for (int x = 0; x < ow; ++x) {
            const int ix = x * win.stride_w - win.pad_w + kj;
            dst[x] = (ix < 0 || ix >= w) ? T{0} : src[ix];
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatter-add columns back into a CHW image.
template <typename T>
void col2im(const T* cols, int channels, int h, int w, const Window& win, T* image) {
  const int oh = win.out_h(h);
  const int ow = win.out_w(w);
  for (int c = 0; c < channels; ++c) {
    T* plane = image + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < win.kernel_h; ++ki) {
      for (int kj = 0; kj < win.kernel_w; ++kj) {
        const T* row = cols + ((static_cast<std::size_t>(c) * win.kernel_h + ki) * win.kernel_w +
                               kj) * static_cast<std::size_t>(oh) * ow;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * win.stride_h - win.pad_h + ki;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + static_cast<std::size_t>(y) * ow;
          T* dst = plane + static_cast<std::size_t>(iy) * w;
          for (int x = 0; x < ow; ++x) {
            const int ix = x * win.stride_w - win.pad_w + kj;
            if (ix >= 0 && ix < w) dst[ix] += src[x];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Cross-correlation of an NCHW batch with [out_c, in_c, kh, kw] weights.
/// `bias` may be empty.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 const Window& win) {
  if (input.rank() != 4 || weight.rank() != 4) {
    throw ShapeError("conv2d expects NCHW input and OIHW weights, got " +
                     to_string(input.shape()) + " and " + to_string(weight.shape()));
  }
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int oc = weight.dim(0);
  if (weight.dim(1) != c || weight.dim(2) != win.kernel_h || weight.dim(3) != win.kernel_w) {
    throw ShapeError("conv2d weight " + to_string(weight.shape()) +
                     " incompatible with input channels " + std::to_string(c));
  }
  win.check_fits(h, w, "conv2d");
  const int oh = win.out_h(h), ow = win.out_w(w);
  const int k = c * win.kernel_h * win.kernel_w;
  const int spatial = oh * ow;

  Tensor<T> out({n, oc, oh, ow});
  ConstMatrixMap<T> wmat(weight.data(), oc, k);
  std::vector<T> cols(win.pointwise() ? 0 : static_cast<std::size_t>(k) * spatial);
  for (int b = 0; b < n; ++b) {
    const T* image = input.data() + static_cast<std::size_t>(b) * c * h * w;
    const T* colptr = image;
    if (!win.pointwise()) {
      detail::im2col(image, c, h, w, win, cols.data());
      colptr = cols.data();
    }
    MatrixMap<T> omat(out.data() + static_cast<std::size_t>(b) * oc * spatial, oc, spatial);
    omat.noalias() = wmat * ConstMatrixMap<T>(colptr, k, spatial);
    if (!bias.empty()) {
      for (int o = 0; o < oc; ++o) omat.row(o).array() += bias[static_cast<std::size_t>(o)];
    }
  }
  return out;
}

/// Gradients of conv2d. Accumulates into grad_weight / grad_bias (grad_bias may
/// be empty) and returns the gradient with respect to the input.
template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight,
                          const Tensor<T>& grad_out, const Window& win, Tensor<T>& grad_weight,
                          Tensor<T>* grad_bias) {
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int oc = weight.dim(0);
  const int oh = grad_out.dim(2), ow = grad_out.dim(3);
  const int k = c * win.kernel_h * win.kernel_w;
  const int spatial = oh * ow;

  Tensor<T> grad_in(input.shape());
  ConstMatrixMap<T> wmat(weight.data(), oc, k);
  MatrixMap<T> gw(grad_weight.data(), oc, k);
  const bool pointwise = win.pointwise();
  std::vector<T> cols(pointwise ? 0 : static_cast<std::size_t>(k) * spatial);
  std::vector<T> grad_cols(pointwise ? 0 : static_cast<std::size_t>(k) * spatial);
  for (int b = 0; b < n; ++b) {
    const std::size_t in_off = static_cast<std::size_t>(b) * c * h * w;
    ConstMatrixMap<T> gy(grad_out.data() + static_cast<std::size_t>(b) * oc * spatial, oc,
                         spatial);
    if (pointwise) {
      gw.noalias() += gy * ConstMatrixMap<T>(input.data() + in_off, k, spatial).transpose();
      MatrixMap<T>(grad_in.data() + in_off, k, spatial).noalias() = wmat.transpose() * gy;
    } else {
      detail::im2col(input.data() + in_off, c, h, w, win, cols.data());
      gw.noalias() += gy * ConstMatrixMap<T>(cols.data(), k, spatial).transpose();
      MatrixMap<T>(grad_cols.data(), k, spatial).noalias() = wmat.transpose() * gy;
      detail::col2im(grad_cols.data(), c, h, w, win, grad_in.data() + in_off);
    }
    if (grad_bias != nullptr) {
      // sequential so the result does not depend on buffer alignment
      for (int o = 0; o < oc; ++o) {
        T acc = 0;
        for (int j = 0; j < spatial; ++j) acc += gy(o, j);
        (*grad_bias)[static_cast<std::size_t>(o)] += acc;
      }
    }
  }
  return grad_in;
}

/// Max pooling with -inf padding. `argmax` receives, per output element, the
/// flat input index that won (used by the backward pass).
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& input, const Window& win,
                     std::vector<std::uint32_t>* argmax = nullptr) {
  if (input.rank() != 4) throw ShapeError("max_pool2d expects NCHW, got " + to_string(input.shape()));
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  win.check_fits(h, w, "max_pool2d");
  const int oh = win.out_h(h), ow = win.out_w(w);
  Tensor<T> out({n, c, oh, ow});
  if (argmax) argmax->assign(out.size(), 0);
  std::size_t o = 0;
  for (int p = 0; p < n * c; ++p) {
    const std::size_t base = static_cast<std::size_t>(p) * h * w;
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x, ++o) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_idx = base;
        for (int ki = 0; ki < win.kernel_h; ++ki) {
          const int iy = y * win.stride_h - win.pad_h + ki;
          if (iy < 0 || iy >= h) continue;
          for (int kj = 0; kj < win.kernel_w; ++kj) {
            const int ix = x * win.stride_w - win.pad_w + kj;
            if (ix < 0 || ix >= w) continue;
            const std::size_t idx = base + static_cast<std::size_t>(iy) * w + ix;
            if (input[idx] > best) {
              best = input[idx];
              best_idx = idx;
            }
          }
        }
        out[o] = best;
        if (argmax) (*argmax)[o] = static_cast<std::uint32_t>(best_idx);
      }
    }
  }
  return out;
}

/// Average pooling. With `count_pad` the divisor is the full window area,
/// otherwise only in-bounds elements are counted.
template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& input, const Window& win, bool count_pad) {
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  win.check_fits(h, w, "avg_pool2d");
  const int oh = win.out_h(h), ow = win.out_w(w);
  Tensor<T> out({n, c, oh, ow});
  std::size_t o = 0;
  for (int p = 0; p < n * c; ++p) {
    const T* plane = input.data() + static_cast<std::size_t>(p) * h * w;
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x, ++o) {
        T sum{0};
        int count = 0;
        for (int ki = 0; ki < win.kernel_h; ++ki) {
          const int iy = y * win.stride_h - win.pad_h + ki;
          if (iy < 0 || iy >= h) continue;
          for (int kj = 0; kj < win.kernel_w; ++kj) {
            const int ix = x * win.stride_w - win.pad_w + kj;
            if (ix < 0 || ix >= w) continue;
            sum += plane[static_cast<std::size_t>(iy) * w + ix];
            ++count;
          }
        }
        out[o] = sum / static_cast<T>(count_pad ? win.kernel_h * win.kernel_w : count);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> avg_pool2d_backward(const Tensor<T>& grad_out, const Shape& in_shape, const Window& win,
                              bool count_pad) {
  const int n = in_shape[0], c = in_shape[1], h = in_shape[2], w = in_shape[3];
  const int oh = grad_out.dim(2), ow = grad_out.dim(3);
  Tensor<T> grad_in(in_shape);
  std::size_t o = 0;
  for (int p = 0; p < n * c; ++p) {
    T* plane = grad_in.data() + static_cast<std::size_t>(p) * h * w;
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x, ++o) {
        const int y0 = y * win.stride_h - win.pad_h, x0 = x * win.stride_w - win.pad_w;
        const int ya = std::max(y0, 0), yb = std::min(y0 + win.kernel_h, h);
        const int xa = std::max(x0, 0), xb = std::min(x0 + win.kernel_w, w);
        const int count = count_pad ? win.kernel_h * win.kernel_w : (yb - ya) * (xb - xa);
        const T g = grad_out[o] / static_cast<T>(count);
        for (int iy = ya; iy < yb; ++iy)
          for (int ix = xa; ix < xb; ++ix) plane[static_cast<std::size_t>(iy) * w + ix] += g;
      }
    }
  }
  return grad_in;
}

/// NCHW -> [N, C] spatial means.
template <typename T>
Tensor<T> global_avg_pool2d(const Tensor<T>& input) {
  const int n = input.dim(0), c = input.dim(1);
  const std::size_t spatial = static_cast<std::size_t>(input.dim(2)) * input.dim(3);
  Tensor<T> out({n, c});
  for (int p = 0; p < n * c; ++p) {
    const T* plane = input.data() + static_cast<std::size_t>(p) * spatial;
    T sum{0};
    for (std::size_t i = 0; i < spatial; ++i) sum += plane[i];
    out[static_cast<std::size_t>(p)] = sum / static_cast<T>(spatial);
  }
  return out;
}

}  // namespace cxr::nn
