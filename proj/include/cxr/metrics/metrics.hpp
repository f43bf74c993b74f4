#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cxr/core/error.hpp"

namespace cxr::metrics {

struct ConfusionCounts {
  std::int64_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::int64_t total() const { return tp + tn + fp + fn; }
  std::int64_t positives() const { return tp + fn; }
  std::int64_t negatives() const { return tn + fp; }

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    tn += o.tn;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

/// Exact non-negative ratio of counts, so display rounding never depends on
/// floating-point noise.
struct Ratio {
  std::int64_t num = 0;
  std::int64_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  double percent() const { return 100.0 * value(); }

  /// Percent in tenths, rounded half away from zero: 0.3125 -> 313.
  std::int64_t tenths_of_percent() const { return (2 * 1000 * num + den) / (2 * den); }

  bool operator==(const Ratio& o) const { return num * o.den == o.num * den; }
};

/// A metric that is undefined when its denominator is zero.
using Metric = std::optional<Ratio>;

inline Metric ratio(std::int64_t num, std::int64_t den) {
  if (den == 0) return std::nullopt;
  return Ratio{num, den};
}

enum class MetricName { accuracy, recall, specificity, precision, f1 };
inline constexpr std::array<MetricName, 5> kMetricNames = {MetricName::accuracy, MetricName::recall,
                                                           MetricName::specificity, MetricName::precision,
                                                           MetricName::f1};

inline const char* short_name(MetricName m) {
  switch (m) {
    case MetricName::accuracy: return "ACC";
    case MetricName::recall: return "REC";
    case MetricName::specificity: return "SPE";
    case MetricName::precision: return "PRE";
    case MetricName::f1: return "F1";
  }
  return "?";
}

struct MetricSet {
  Metric accuracy, recall, specificity, precision, f1;

  const Metric& operator[](MetricName m) const {
    switch (m) {
      case MetricName::accuracy: return accuracy;
      case MetricName::recall: return recall;
      case MetricName::specificity: return specificity;
      case MetricName::precision: return precision;
      case MetricName::f1: return f1;
    }
    return accuracy;
  }
};

/// Positive class is label 1 (covid19).
inline MetricSet metrics_from_confusion(const ConfusionCounts& c) {
  if (c.tp < 0 || c.tn < 0 || c.fp < 0 || c.fn < 0) throw DataError("negative confusion count");
  if (c.total() == 0) throw DataError("metrics of an empty confusion matrix");
  MetricSet m;
  m.accuracy = ratio(c.tp + c.tn, c.total());
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.specificity = ratio(c.tn, c.tn + c.fp);
  m.precision = ratio(c.tp, c.tp + c.fp);
  // 2PR / (P + R) reduces to 2tp / (2tp + fp + fn) whenever P and R exist and
  // their sum is nonzero, i.e. tp > 0
  if (m.precision && m.recall && c.tp > 0) m.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  return m;
}

inline ConfusionCounts confusion_from_predictions(const std::map<std::string, int>& truth,
                                                  const std::map<std::string, int>& predicted) {
  if (truth.size() != predicted.size()) {
    throw DataError("confusion: " + std::to_string(truth.size()) + " truth ids vs " +
                    std::to_string(predicted.size()) + " predictions");
  }
  ConfusionCounts c;
  auto p = predicted.begin();
  for (const auto& [id, t] : truth) {
    if (p->first != id) throw DataError("confusion: id mismatch at " + id + " / " + p->first);
    const int y = p->second;
    if ((t != 0 && t != 1) || (y != 0 && y != 1)) throw DataError("confusion: labels must be 0 or 1 (" + id + ")");
    if (t == 1) (y == 1 ? c.tp : c.fn) += 1;
    else (y == 1 ? c.fp : c.tn) += 1;
    ++p;
  }
  return c;
}

/// Element-wise sum of the five fold counts, then metrics of the sum.
inline std::pair<ConfusionCounts, MetricSet> pool_folds(std::span<const ConfusionCounts> folds) {
  if (folds.size() != 5) throw DataError("pooling needs exactly 5 folds, got " + std::to_string(folds.size()));
  ConfusionCounts sum;
  for (const auto& c : folds) sum += c;
  return {sum, metrics_from_confusion(sum)};
}

inline constexpr const char* kUndefined = "undefined";

/// Percent to one decimal, rounded half away from zero, or the undefined marker.
inline std::string format_percent(const Metric& m) {
  if (!m) return kUndefined;
  const auto t = m->tenths_of_percent();
  return std::to_string(t / 10) + "." + std::to_string(t % 10);
}

}  // namespace cxr::metrics
