#pragma once

// Independent reference implementations used only by tests. Nothing here
// shares code with the library paths it checks.

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "cxr/core/random.hpp"
#include "cxr/nn/tensor.hpp"

namespace oracle {

using cxr::nn::Tensor;

inline Tensor<double> random_tensor(cxr::nn::Shape shape, std::uint64_t seed, double lo = -1.0,
                                    double hi = 1.0) {
  cxr::Rng rng(seed);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

/// Direct sum over input maps and kernel taps, zero padding.
inline Tensor<double> conv_nested(const Tensor<double>& x, const Tensor<double>& w,
                                  const std::vector<double>& bias, int sh, int sw, int ph, int pw) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int oc = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int oh = (h + 2 * ph - kh) / sh + 1, ow = (wd + 2 * pw - kw) / sw + 1;
  Tensor<double> y({n, oc, oh, ow});
  for (int b = 0; b < n; ++b)
    for (int j = 0; j < oc; ++j)
      for (int y0 = 0; y0 < oh; ++y0)
        for (int x0 = 0; x0 < ow; ++x0) {
          double s = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(j)];
          for (int a = 0; a < c; ++a)
            for (int u = 0; u < kh; ++u)
              for (int v = 0; v < kw; ++v) {
                const int iy = y0 * sh - ph + u, ix = x0 * sw - pw + v;
                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                s += w.at(j, a, u, v) * x.at(b, a, iy, ix);
              }
          y.at(b, j, y0, x0) = s;
        }
  return y;
}

inline Tensor<double> max_pool_nested(const Tensor<double>& x, int k, int s) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = (h - k) / s + 1, ow = (w - k) / s + 1;
  Tensor<double> y({n, c, oh, ow});
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          double m = -std::numeric_limits<double>::infinity();
          for (int u = 0; u < k; ++u)
            for (int v = 0; v < k; ++v) m = std::max(m, x.at(b, ch, i * s + u, j * s + v));
          y.at(b, ch, i, j) = m;
        }
  return y;
}

inline std::vector<double> channel_means(const Tensor<double>& chw) {
  std::vector<double> out;
  for (int ch = 0; ch < chw.dim(0); ++ch) {
    double s = 0.0;
    for (int i = 0; i < chw.dim(1); ++i)
      for (int j = 0; j < chw.dim(2); ++j)
        s += chw[(static_cast<std::size_t>(ch) * chw.dim(1) + i) * chw.dim(2) + j];
    out.push_back(s / (chw.dim(1) * chw.dim(2)));
  }
  return out;
}

/// Central finite difference of a scalar function of one tensor entry.
inline double central_difference(Tensor<double>& param, std::size_t i,
                                  const std::function<double()>& f, double step = 1e-6) {
  const double saved = param[i];
  param[i] = saved + step;
  const double up = f();
  param[i] = saved - step;
  const double down = f();
  param[i] = saved;
  return (up - down) / (2.0 * step);
}

/// |a - b| / max(|a|, |b|, floor): relative error that stays meaningful when
/// both values are tiny.
inline double relative_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace oracle
