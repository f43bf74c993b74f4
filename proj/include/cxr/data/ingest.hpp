#pragma once

#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "cxr/core/digest.hpp"
#include "cxr/core/text_io.hpp"
#include "cxr/data/records.hpp"

namespace cxr::data {

namespace fs = std::filesystem;

/// One CSV line split on commas, honouring double-quoted fields.
inline std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  return out;
}

/// Rows of a headed CSV file as column-name -> value maps.
inline std::vector<std::map<std::string, std::string>> read_csv(const fs::path& path) {
  const auto lines = read_lines(path);
  std::vector<std::map<std::string, std::string>> rows;
  if (lines.empty()) return rows;
  auto header = split_csv(lines.front());
  for (auto& h : header) h = trim(h);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto cells = split_csv(lines[i]);
    std::map<std::string, std::string> row;
    for (std::size_t k = 0; k < header.size() && k < cells.size(); ++k) row[header[k]] = trim(cells[k]);
    rows.push_back(std::move(row));
  }
  return rows;
}

// Per-source label tables. Files listed in a table but absent on disk are
// ignored; files on disk but absent from the table cannot be labelled.
inline constexpr const char* kCovidMetadata = "metadata.csv";
inline constexpr const char* kChestXray8Metadata[] = {"Data_Entry_2017.csv", "Data_Entry_2017_v2020.csv"};

inline bool is_metadata_file(Source s, const fs::path& p) {
  const auto name = p.filename().string();
  if (s == Source::covid_repo) return name == kCovidMetadata;
  if (s == Source::chestxray8) {
    for (const char* m : kChestXray8Metadata)
      if (name == m) return true;
  }
  return false;
}

inline std::optional<fs::path> find_file(const fs::path& root, const std::vector<std::string>& names) {
  std::vector<fs::path> hits;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    if (std::find(names.begin(), names.end(), e.path().filename().string()) != names.end()) {
      hits.push_back(e.path());
    }
  }
  if (hits.empty()) return std::nullopt;
  return *std::min_element(hits.begin(), hits.end());
}

/// Outcome of labelling one file.
enum class Verdict { keep, excluded, unlabeled };

struct LabelDecision {
  Verdict verdict = Verdict::unlabeled;
  Label label = Label::covid19;
  std::string reason;
};

/// Maps files of one source tree to labels.
class SourceLabeler {
 public:
  SourceLabeler(Source source, const fs::path& root) : source_(source) {
    if (source == Source::covid_repo) {
      if (auto meta = find_file(root, {kCovidMetadata})) load_covid(*meta);
    } else if (source == Source::chestxray8) {
      if (auto meta = find_file(root, {kChestXray8Metadata[0], kChestXray8Metadata[1]})) load_cxr8(*meta);
    }
  }

  bool has_table() const { return has_table_; }

  LabelDecision decide(const fs::path& relative) const {
    switch (source_) {
      case Source::covid_repo:
      case Source::chestxray8:
        return from_table(relative);
      case Source::kaggle_pneumonia:
        return from_name(relative);
    }
    return {};
  }

 private:
  void load_covid(const fs::path& meta) {
    has_table_ = true;
    for (auto& row : read_csv(meta)) {
      const auto file = row["filename"];
      if (file.empty()) continue;
      const auto modality = to_lower(row["modality"]);
      const auto finding = to_lower(row["finding"]);
      LabelDecision d;
      if (modality != "x-ray") {
        d = {Verdict::excluded, Label::covid19, "modality " + row["modality"]};
      } else if (finding.find("covid-19") == std::string::npos && finding.find("covid19") == std::string::npos) {
        d = {Verdict::excluded, Label::covid19, "finding " + row["finding"]};
      } else {
        d = {Verdict::keep, Label::covid19, {}};
      }
      merge(file, d);
    }
  }

  void load_cxr8(const fs::path& meta) {
    has_table_ = true;
    for (auto& row : read_csv(meta)) {
      const auto file = row["Image Index"];
      if (file.empty()) continue;
      const auto finding = row["Finding Labels"];
      if (finding == "No Finding") {
        merge(file, {Verdict::keep, Label::normal, {}});
      } else {
        merge(file, {Verdict::excluded, Label::normal, "finding " + finding});
      }
    }
  }

  // A file listed twice is kept only if every listing keeps it.
  void merge(const std::string& file, const LabelDecision& d) {
    auto [it, inserted] = table_.emplace(file, d);
    if (!inserted && d.verdict != Verdict::keep) it->second = d;
  }

  LabelDecision from_table(const fs::path& relative) const {
    if (!has_table_) {
      return {Verdict::keep, source_ == Source::covid_repo ? Label::covid19 : Label::normal, {}};
    }
    auto it = table_.find(relative.filename().string());
    if (it == table_.end()) return {Verdict::unlabeled, Label::covid19, "not listed in metadata"};
    return it->second;
  }

  static LabelDecision from_name(const fs::path& relative) {
    const auto stem = to_lower(relative.filename().string());
    if (stem.find("bacteria") != std::string::npos) return {Verdict::keep, Label::bacterial, {}};
    if (stem.find("virus") != std::string::npos || stem.find("viral") != std::string::npos) {
      return {Verdict::keep, Label::viral, {}};
    }
    for (auto part = relative.parent_path(); !part.empty() && part != part.parent_path();
         part = part.parent_path()) {
      const auto dir = to_lower(part.filename().string());
      if (dir == "bacterial" || dir == "bacteria") return {Verdict::keep, Label::bacterial, {}};
      if (dir == "viral" || dir == "virus") return {Verdict::keep, Label::viral, {}};
      if (dir == "normal") return {Verdict::excluded, Label::normal, "normal class of this source is not used"};
    }
    return {Verdict::unlabeled, Label::bacterial, "no bacteria/virus marker in name or directory"};
  }

  Source source_;
  bool has_table_ = false;
  std::map<std::string, LabelDecision> table_;
};

struct ImageProbe {
  bool ok = false;
  int width = 0, height = 0, channels = 0;
};

/// Decode fully to make sure the file is usable. Two- and four-channel images
/// (alpha) count as one and three channels.
inline ImageProbe probe_image(const fs::path& path) {
  cv::Mat m;
  try {
    m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception&) {
    return {};
  }
  if (m.empty() || (m.depth() != CV_8U && m.depth() != CV_16U)) return {};
  const int c = m.channels();
  if (c < 1 || c > 4) return {};
  return {true, m.cols, m.rows, c <= 2 ? 1 : 3};
}

struct IngestReport {
  Source source = Source::covid_repo;
  fs::path root;
  std::vector<ImageRecord> records;
  int not_image = 0;   // files that do not decode as images
  int excluded = 0;    // images outside the target classes (CT, other findings, ...)
  int unlabeled = 0;   // images whose label could not be inferred
  int duplicates = 0;  // byte-identical repeats dropped
  std::vector<std::string> warnings;

  int skipped() const { return not_image + excluded + unlabeled + duplicates; }
};

/// Scan one source tree. Records are sorted by id; identical files are kept
/// once under the smallest id.
inline IngestReport ingest_source(const fs::path& source_root, Source source, int jobs = 1) {
  if (!fs::is_directory(source_root)) {
    throw MissingInputError("source directory not found: " + source_root.string() + " (" +
                            std::string(name_of(source)) + ")");
  }
  IngestReport report;
  report.source = source;
  report.root = fs::absolute(source_root).lexically_normal();
  const SourceLabeler labeler(source, report.root);

  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(report.root)) {
    if (e.is_regular_file() && !is_metadata_file(source, e.path())) {
      files.push_back(e.path().lexically_relative(report.root));
    }
  }
  // id order, not path order: ids compare as plain strings
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.generic_string() < b.generic_string(); });

  struct Scan {
    ImageProbe probe;
    LabelDecision decision;
    std::string digest;
  };
  std::vector<Scan> scans(files.size());
  auto work = [&](std::size_t first, std::size_t step) {
    for (std::size_t i = first; i < files.size(); i += step) {
      auto& s = scans[i];
      s.probe = probe_image(report.root / files[i]);
      if (!s.probe.ok) continue;
      s.decision = labeler.decide(files[i]);
      if (s.decision.verdict == Verdict::keep) s.digest = sha256_file(report.root / files[i]);
    }
  };
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
  }

  int readable = 0;
  std::map<std::string, std::string> first_by_digest;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const auto& s = scans[i];
    const auto id = make_id(source, files[i]);
    if (!s.probe.ok) {
      ++report.not_image;
      report.warnings.push_back("skipped " + id + ": not a readable image");
      continue;
    }
    ++readable;
    if (s.decision.verdict == Verdict::excluded) {
      ++report.excluded;
      report.warnings.push_back("excluded " + id + ": " + s.decision.reason);
      continue;
    }
    if (s.decision.verdict == Verdict::unlabeled) {
      ++report.unlabeled;
      report.warnings.push_back("skipped " + id + ": " + s.decision.reason);
      continue;
    }
    // ids arrive in sorted order, so the first holder of a digest is the smallest id
    auto [it, fresh] = first_by_digest.emplace(s.digest, id);
    if (!fresh) {
      ++report.duplicates;
      report.warnings.push_back("duplicate " + id + " of " + it->second);
      continue;
    }
    ImageRecord r;
    r.id = id;
    r.source = source;
    r.label = s.decision.label;
    r.path = report.root / files[i];
    r.width = s.probe.width;
    r.height = s.probe.height;
    r.channels = s.probe.channels;
    r.digest = s.digest;
    report.records.push_back(std::move(r));
  }
  if (readable == 0) {
    throw MissingInputError("no readable images in " + report.root.string() + " (" +
                            std::string(name_of(source)) + ")");
  }
  if (report.records.empty()) {
    throw DataError("no usable images in " + report.root.string() + ": all " +
                    std::to_string(readable) + " readable images were excluded or unlabeled");
  }
  return report;
}

}  // namespace cxr::data
