#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "cxr/nn/layers.hpp"
#include "cxr/nn/ops.hpp"

namespace cxr::nn {

template <typename T>
struct LossResult {
  double loss = 0.0;      // mean over the batch
  Tensor<T> grad;         // d(mean loss) / d(logits)
  Tensor<T> probabilities;
  int correct = 0;        // argmax hits, ties toward the higher class index
};

/// Index of the largest probability; ties resolve to the highest index so
/// that an exact 0.5 / 0.5 split is called positive.
template <typename T>
int argmax_high_tie(std::span<const T> row) {
  int best = 0;
  for (int k = 1; k < static_cast<int>(row.size()); ++k)
    if (row[static_cast<std::size_t>(k)] >= row[static_cast<std::size_t>(best)]) best = k;
  return best;
}

/// Softmax cross-entropy averaged over the batch.
template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> targets) {
  const int n = logits.dim(0), m = logits.dim(1);
  if (static_cast<int>(targets.size()) != n) {
    throw ShapeError("cross-entropy: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(n) + " rows");
  }
  LossResult<T> r;
  r.probabilities = softmax_rows(logits);
  r.grad = r.probabilities;
  for (int i = 0; i < n; ++i) {
    const int t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= m) throw ShapeError("cross-entropy: target out of range");
    // log-sum-exp form keeps the loss finite when the probability underflows
    const T* row = logits.data() + static_cast<std::size_t>(i) * m;
    T peak = row[0];
    for (int k = 1; k < m; ++k) peak = std::max(peak, row[k]);
    double lse = 0.0;
    for (int k = 0; k < m; ++k) lse += std::exp(static_cast<double>(row[k] - peak));
    r.loss += std::log(lse) + static_cast<double>(peak) - static_cast<double>(row[t]);
    r.grad.at(i, t) -= T{1};
    if (argmax_high_tie<T>(r.probabilities.values().subspan(static_cast<std::size_t>(i) * m, m)) == t) {
      ++r.correct;
    }
  }
  r.loss /= n;
  r.grad *= static_cast<T>(1.0 / n);
  return r;
}

struct AdamOptions {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive moment estimation with bias-corrected first and second moments.
template <typename T>
class Adam {
 public:
  Adam(std::vector<ParamRef<T>> params, AdamOptions options) : options_(options) {
    for (auto& p : params) {
      if (!p.trainable()) continue;
      params_.push_back(p);
      m_.emplace_back(p.value->size(), 0.0);
      v_.emplace_back(p.value->size(), 0.0);
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.grad->fill(T{0});
  }

  void step() {
    ++t_;
    const double b1 = options_.beta1, b2 = options_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& value = *params_[k].value;
      const auto& grad = *params_[k].grad;
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = grad[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        const double update =
            options_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.epsilon);
        value[i] = static_cast<T>(value[i] - update);
      }
    }
  }

  long steps() const { return t_; }

 private:
  AdamOptions options_;
  std::vector<ParamRef<T>> params_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

}  // namespace cxr::nn
