#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cxr/core/provenance.hpp"
#include "cxr/core/text_io.hpp"
#include "cxr/data/records.hpp"
#include "cxr/report/tables.hpp"

namespace cxr::report {

struct ComparisonRow {
  std::string study, data_type, methods, classes, accuracy;
  std::string best_model, reference;  // filled for rows of this run only
};

inline const std::vector<ComparisonRow>& literature_rows() {
  static const std::vector<ComparisonRow> rows = {
      {"Das et al.", "X-ray", "Xception", "3", "97.40", "", ""},
      {"Singh et al.", "X-ray", "MADE based CNN", "2", "92.55", "", ""},
      {"Afshar et al.", "X-ray", "Capsule Networks", "4", "95.7", "", ""},
      {"Ucar and Korkmaz", "X-ray", "Bayes-SqueezeNet", "3", "98.3", "", ""},
      {"Khan et al.", "X-ray", "CoroNet", "4", "89.60", "", ""},
      {"Sahinbas and Catak", "X-ray", "VGG16, VGG19, ResNet, DenseNet, InceptionV3", "2", "80", "", ""},
      {"Medhi et al.", "X-ray", "Deep CNN", "2", "93", "", ""},
      {"Zhang et al.", "X-ray", "CAAD", "2", "95.18", "", ""},
      {"Apostopolus et al.", "X-ray", "VGG-19", "3", "93.48", "", ""},
      {"Narin et al.", "X-ray", "InceptionV3, ResNet50, Inception-ResNetV2", "2", "98", "", ""},
  };
  return rows;
}

inline std::string class_pair(const std::string& dataset) {
  const auto negative = data::dataset_spec(dataset).negative_label;
  const char* name = negative == data::Label::normal  ? "Normal"
                     : negative == data::Label::viral ? "Viral Pneumonia"
                                                      : "Bacterial Pneumonia";
  return std::string("2 (COVID-19 / ") + name + ")";
}

/// Best pooled accuracy reported for the original experiment on each dataset.
inline std::string reference_accuracy(const std::string& dataset) {
  if (dataset == "dataset1") return "96.1";
  if (dataset == "dataset2") return "99.5";
  if (dataset == "dataset3") return "99.7";
  return "";
}

/// Best pooled accuracy of the backbones that completed all five folds, or
/// nothing when no backbone did.
inline std::optional<ComparisonRow> this_study_row(const MetricTable& t) {
  std::optional<ComparisonRow> row;
  const TableRow* best = nullptr;
  std::string methods;
  for (const auto& r : t.rows) {
    if (r.fold != 0) continue;
    methods += (methods.empty() ? "" : ", ") + std::string(models::display_name(r.backbone));
    if (!best || r.metrics.accuracy->tenths_of_percent() > best->metrics.accuracy->tenths_of_percent()) best = &r;
  }
  if (!best) return row;
  row = ComparisonRow{"This Study", "X-ray", methods, class_pair(t.dataset),
                      metrics::format_percent(best->metrics.accuracy),
                      std::string(models::display_name(best->backbone)), reference_accuracy(t.dataset)};
  return row;
}

inline std::vector<ComparisonRow> comparison_rows(const std::vector<MetricTable>& tables) {
  auto rows = literature_rows();
  for (const auto& t : tables)
    if (auto r = this_study_row(t)) rows.push_back(*r);
  return rows;
}

inline std::string format_comparison(const std::vector<ComparisonRow>& rows, const Provenance& prov) {
  std::string out = "# cxrbench comparison v1\n" + prov.header();
  out += "Previous Study\tData Type\tMethods / Classifier\tNumber of Classes\tAccuracy (%)\tBest Model\tReference (%)\n";
  for (const auto& r : rows) {
    out += r.study + "\t" + r.data_type + "\t" + r.methods + "\t" + r.classes + "\t" + r.accuracy + "\t" + r.best_model +
           "\t" + r.reference + "\n";
  }
  return out;
}

inline void write_comparison(const std::filesystem::path& path, const std::vector<ComparisonRow>& rows,
                             const Provenance& prov) {
  write_atomic(path, format_comparison(rows, prov));
}

}  // namespace cxr::report
