#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cxr/core/text_io.hpp"
#include "cxr/metrics/metrics.hpp"

namespace cxr::metrics {

inline constexpr int kPooledFold = 0;  // the "Total / Average" row

/// One published result row: counts plus the five printed percentages.
struct FixtureRow {
  std::string model;
  std::string dataset;
  int fold = kPooledFold;
  ConfusionCounts counts;
  std::array<std::optional<double>, 5> percent{};  // ACC REC SPE PRE F1
  int line = 0;

  std::string label() const {
    return model + " " + dataset + " " + (fold == kPooledFold ? std::string("pooled") : "fold" + std::to_string(fold));
  }
};

inline std::vector<FixtureRow> parse_fixtures(const std::vector<std::string>& lines, const std::string& origin) {
  std::vector<FixtureRow> rows;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = trim(lines[i]);
    if (line.empty() || line[0] == '#') continue;
    const auto f = split(line, '\t');
    const auto where = origin + ":" + std::to_string(i + 1);
    if (f.size() != 12) throw DataError(where + ": expected 12 tab-separated fields, got " + std::to_string(f.size()));
    FixtureRow r;
    r.line = static_cast<int>(i + 1);
    r.model = f[0];
    r.dataset = f[1];
    try {
      r.fold = f[2] == "pooled" ? kPooledFold : std::stoi(f[2]);
      r.counts = {std::stoll(f[3]), std::stoll(f[4]), std::stoll(f[5]), std::stoll(f[6])};
      for (std::size_t k = 0; k < 5; ++k) {
        if (f[7 + k] != kUndefined) r.percent[k] = std::stod(f[7 + k]);
      }
    } catch (const std::logic_error&) {
      throw DataError(where + ": malformed number");
    }
    if (r.fold < 0 || r.fold > 5) throw DataError(where + ": fold must be 1..5 or pooled");
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<FixtureRow> load_fixtures(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingInputError("fixture file not found: " + path.string());
  return parse_fixtures(read_lines(path), path.string());
}

struct Discrepancy {
  std::string row;  // e.g. "resnet50 dataset1 fold3"
  std::string metric;
  std::string published;
  std::string computed;
  int line = 0;
};

inline constexpr double kTolerancePp = 0.1;

/// Recompute each row's metrics from its counts and compare with the printed
/// percentages. Anything outside the tolerance is reported, never thrown.
inline std::vector<Discrepancy> validate_against_reference(const std::vector<FixtureRow>& rows,
                                                       double tolerance_pp = kTolerancePp) {
  std::vector<Discrepancy> out;
  for (const auto& r : rows) {
    if (r.counts.total() <= 0) {
      out.push_back({r.label(), "counts", "-", "empty confusion matrix", r.line});
      continue;
    }
    const auto m = metrics_from_confusion(r.counts);
    for (std::size_t k = 0; k < 5; ++k) {
      const auto& got = m[kMetricNames[k]];
      const auto& want = r.percent[k];
      const bool ok = got && want ? std::abs(got->percent() - *want) <= tolerance_pp + 1e-9 : !got && !want;
      if (!ok) {
        std::ostringstream pub, comp;
        if (want) pub << *want; else pub << kUndefined;
        if (got) comp << got->percent(); else comp << kUndefined;
        out.push_back({r.label(), short_name(kMetricNames[k]), pub.str(), comp.str(), r.line});
      }
    }
  }
  return out;
}

/// Pooled rows against the sum of their five fold rows: counts must match
/// exactly and the printed pooled percentages must match metrics of the sum.
inline std::vector<Discrepancy> check_pooling(const std::vector<FixtureRow>& rows,
                                              double tolerance_pp = kTolerancePp) {
  std::map<std::pair<std::string, std::string>, std::vector<const FixtureRow*>> folds;
  std::map<std::pair<std::string, std::string>, const FixtureRow*> pooled;
  for (const auto& r : rows) {
    if (r.fold == kPooledFold) pooled[{r.model, r.dataset}] = &r;
    else folds[{r.model, r.dataset}].push_back(&r);
  }
  std::vector<Discrepancy> out;
  for (const auto& [key, row] : pooled) {
    const auto& parts = folds[key];
    std::vector<ConfusionCounts> counts;
    for (const auto* p : parts) counts.push_back(p->counts);
    if (counts.size() != 5) {
      out.push_back({row->label(), "folds", "5", std::to_string(counts.size()), row->line});
      continue;
    }
    const auto [sum, m] = pool_folds(counts);
    if (!(sum == row->counts)) {
      auto fmt = [](const ConfusionCounts& c) {
        return std::to_string(c.tp) + "/" + std::to_string(c.tn) + "/" + std::to_string(c.fp) + "/" + std::to_string(c.fn);
      };
      out.push_back({row->label(), "counts", fmt(row->counts), fmt(sum), row->line});
    }
    for (std::size_t k = 0; k < 5; ++k) {
      const auto& got = m[kMetricNames[k]];
      const auto& want = row->percent[k];
      if (got && want && std::abs(got->percent() - *want) <= tolerance_pp + 1e-9) continue;
      if (!got && !want) continue;
      std::ostringstream pub, comp;
      if (want) pub << *want; else pub << kUndefined;
      if (got) comp << got->percent(); else comp << kUndefined;
      out.push_back({row->label(), short_name(kMetricNames[k]), pub.str(), comp.str(), row->line});
    }
  }
  return out;
}

inline std::string format_discrepancies(const std::vector<Discrepancy>& ds) {
  std::ostringstream out;
  out << "row\tline\tmetric\tpublished\tcomputed\n";
  for (const auto& d : ds) out << d.row << "\t" << d.line << "\t" << d.metric << "\t" << d.published << "\t" << d.computed << "\n";
  return out.str();
}

}  // namespace cxr::metrics
