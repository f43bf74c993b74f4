#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cxr/core/provenance.hpp"
#include "cxr/core/text_io.hpp"
#include "cxr/metrics/metrics.hpp"
#include "cxr/models/config.hpp"
#include "cxr/train/run_record.hpp"

namespace cxr::report {

/// Display order: the five reference backbones first, anything else after.
inline int backbone_rank(models::Backbone b) {
  const auto& order = models::kReferenceBackbones;
  const auto it = std::find(order.begin(), order.end(), b);
  return it == order.end() ? static_cast<int>(order.size()) + static_cast<int>(b) : static_cast<int>(it - order.begin());
}

struct TableRow {
  models::Backbone backbone;
  int fold = 0;  // 0: pooled "Total / Average" row
  metrics::ConfusionCounts counts;
  metrics::MetricSet metrics;
};

struct MetricTable {
  std::string dataset;
  std::vector<TableRow> rows;
  std::vector<std::string> failed;  // stems of failed runs
  std::vector<std::string> incomplete;  // backbones lacking some of the five folds
};

/// Per-fold rows of every completed run for `dataset`, and a pooled row per
/// backbone once all five folds are complete.
inline MetricTable build_metric_table(const std::string& dataset, const std::vector<train::RunRecord>& records) {
  MetricTable t;
  t.dataset = dataset;
  std::map<int, std::map<int, const train::RunRecord*>> by_backbone;  // rank -> fold -> record
  for (const auto& r : records) {
    if (r.dataset != dataset) continue;
    if (r.status != train::RunStatus::completed) {
      t.failed.push_back(r.stem());
      continue;
    }
    by_backbone[backbone_rank(r.model.backbone)][r.fold] = &r;
  }
  for (const auto& [rank, folds] : by_backbone) {
    std::vector<metrics::ConfusionCounts> counts;
    models::Backbone backbone{};
    for (const auto& [fold, r] : folds) {
      backbone = r->model.backbone;
      const auto c = r->confusion();
      counts.push_back(c);
      t.rows.push_back({backbone, fold, c, metrics::metrics_from_confusion(c)});
    }
    if (counts.size() == 5) {
      const auto [sum, pooled] = metrics::pool_folds(counts);
      t.rows.push_back({backbone, 0, sum, pooled});
    } else {
      t.incomplete.push_back(std::string(models::name_of(backbone)));
    }
  }
  return t;
}

/// Pooled row of `backbone`, if the table has one.
inline std::optional<TableRow> pooled_row(const MetricTable& t, models::Backbone backbone) {
  for (const auto& r : t.rows)
    if (r.fold == 0 && r.backbone == backbone) return r;
  return std::nullopt;
}

inline std::string format_metric_table(const MetricTable& t, const Provenance& prov) {
  std::string out = "# cxrbench metric table v1\n" + prov.header();
  out += "# dataset " + t.dataset + "\n";
  for (const auto& s : t.failed) out += "# failed " + s + "\n";
  for (const auto& s : t.incomplete) out += "# incomplete " + s + " (no pooled row)\n";
  out += "Models/Fold\t\tTP\tTN\tFP\tFN\tACC (%)\tREC (%)\tSPE (%)\tPRE (%)\tF1 (%)\n";
  std::optional<models::Backbone> previous;
  for (const auto& r : t.rows) {
    out += previous == r.backbone ? "" : std::string(models::display_name(r.backbone));
    previous = r.backbone;
    out += "\t" + (r.fold == 0 ? std::string("Total / Average") : "Fold" + std::to_string(r.fold));
    for (auto v : {r.counts.tp, r.counts.tn, r.counts.fp, r.counts.fn}) out += "\t" + std::to_string(v);
    for (auto m : metrics::kMetricNames) out += "\t" + metrics::format_percent(r.metrics[m]);
    out += "\n";
  }
  return out;
}

inline void write_metric_table(const std::filesystem::path& path, const MetricTable& t, const Provenance& prov) {
  write_atomic(path, format_metric_table(t, prov));
}

}  // namespace cxr::report
