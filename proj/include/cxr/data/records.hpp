#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cxr/core/error.hpp"

namespace cxr::data {

enum class Source { covid_repo, chestxray8, kaggle_pneumonia };
enum class Label { covid19, normal, bacterial, viral };

inline constexpr std::array<Source, 3> kSources = {Source::covid_repo, Source::chestxray8,
                                                   Source::kaggle_pneumonia};
inline constexpr std::array<Label, 4> kLabels = {Label::covid19, Label::normal, Label::bacterial,
                                                 Label::viral};

inline std::string_view name_of(Source s) {
  switch (s) {
    case Source::covid_repo: return "covid_repo";
    case Source::chestxray8: return "chestxray8";
    case Source::kaggle_pneumonia: return "kaggle_pneumonia";
  }
  return "?";
}

inline std::string_view name_of(Label l) {
  switch (l) {
    case Label::covid19: return "covid19";
    case Label::normal: return "normal";
    case Label::bacterial: return "bacterial";
    case Label::viral: return "viral";
  }
  return "?";
}

inline Source parse_source(std::string_view s) {
  for (auto v : kSources)
    if (s == name_of(v)) return v;
  throw DataError("unknown source '" + std::string(s) + "'");
}

inline Label parse_label(std::string_view s) {
  for (auto v : kLabels)
    if (s == name_of(v)) return v;
  throw DataError("unknown label '" + std::string(s) + "'");
}

/// The only source each label may come from.
inline Source source_of(Label l) {
  switch (l) {
    case Label::covid19: return Source::covid_repo;
    case Label::normal: return Source::chestxray8;
    default: return Source::kaggle_pneumonia;
  }
}

struct ImageRecord {
  std::string id;  // "<source>:<path relative to the source root>"
  Source source = Source::covid_repo;
  Label label = Label::covid19;
  std::filesystem::path path;  // absolute
  int width = 0;
  int height = 0;
  int channels = 1;
  std::string digest;  // SHA-256 of the file bytes

  bool operator==(const ImageRecord&) const = default;
};

inline std::string make_id(Source s, const std::filesystem::path& relative) {
  return std::string(name_of(s)) + ":" + relative.generic_string();
}

struct DatasetSpec {
  std::string name;
  Label positive_label = Label::covid19;
  Label negative_label = Label::normal;
  int expected_positive_count = 341;
  int expected_negative_count = 0;
};

inline const std::array<DatasetSpec, 3>& dataset_specs() {
  static const std::array<DatasetSpec, 3> specs = {{
      {"dataset1", Label::covid19, Label::normal, 341, 2800},
      {"dataset2", Label::covid19, Label::viral, 341, 1493},
      {"dataset3", Label::covid19, Label::bacterial, 341, 2772},
  }};
  return specs;
}

inline const DatasetSpec& dataset_spec(std::string_view name) {
  for (const auto& s : dataset_specs())
    if (s.name == name) return s;
  throw UsageError("unknown dataset '" + std::string(name) + "' (expected dataset1, dataset2 or dataset3)");
}

/// Records of one binary task, ordered by id; label 1 is the positive class.
struct BinaryDataset {
  std::string name;
  std::vector<ImageRecord> records;
  std::vector<int> labels;

  std::size_t size() const { return records.size(); }
  int positives() const {
    int n = 0;
    for (int l : labels) n += l;
    return n;
  }
  int negatives() const { return static_cast<int>(labels.size()) - positives(); }
};

}  // namespace cxr::data
