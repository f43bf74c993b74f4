#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cxr/core/provenance.hpp"
#include "cxr/core/random.hpp"
#include "cxr/core/text_io.hpp"
#include "cxr/data/manifest.hpp"
#include "cxr/data/records.hpp"

namespace cxr::data {

/// Image counts of the reference manifest, per class.
inline int expected_count(Label l) {
  switch (l) {
    case Label::covid19: return 341;
    case Label::normal: return 2800;
    case Label::viral: return 1493;
    case Label::bacterial: return 2772;
  }
  return 0;
}

struct CountCheck {
  std::string what;
  int expected = 0;
  int actual = 0;
  bool matches() const { return expected == actual; }
};

/// All records of the dataset's two classes, in manifest (id) order.
/// Count differences from the reference are returned in `checks`, not thrown.
inline BinaryDataset build_dataset(const Manifest& manifest, const DatasetSpec& spec,
                                   std::vector<CountCheck>* checks = nullptr) {
  BinaryDataset ds;
  ds.name = spec.name;
  for (const auto& r : manifest.records) {
    if (r.label == spec.positive_label || r.label == spec.negative_label) {
      ds.records.push_back(r);
      ds.labels.push_back(r.label == spec.positive_label ? 1 : 0);
    }
  }
  const int pos = ds.positives(), neg = ds.negatives();
  if (pos == 0 || neg == 0) {
    throw DataError(spec.name + ": missing class " +
                    std::string(name_of(pos == 0 ? spec.positive_label : spec.negative_label)) +
                    " in manifest");
  }
  if (checks) {
    checks->push_back({spec.name + " " + std::string(name_of(spec.positive_label)),
                       spec.expected_positive_count, pos});
    checks->push_back({spec.name + " " + std::string(name_of(spec.negative_label)),
                       spec.expected_negative_count, neg});
  }
  return ds;
}

/// Keep at most `limit` negatives, chosen by a seeded shuffle; order by id is
/// preserved. Used when a source holds more candidate negatives than wanted.
inline BinaryDataset limit_negatives(const BinaryDataset& ds, int limit, std::uint64_t seed) {
  if (limit < 0 || ds.negatives() <= limit) return ds;
  std::vector<std::size_t> neg;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.labels[i] == 0) neg.push_back(i);
  Rng rng(Rng::derive(seed, 0x5e1ec7));
  rng.shuffle(std::span<std::size_t>(neg));
  std::vector<bool> keep(ds.size(), true);
  for (std::size_t k = static_cast<std::size_t>(limit); k < neg.size(); ++k) keep[neg[k]] = false;
  BinaryDataset out;
  out.name = ds.name;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (!keep[i]) continue;
    out.records.push_back(ds.records[i]);
    out.labels.push_back(ds.labels[i]);
  }
  return out;
}

// Dataset file: provenance header, then "id<TAB>label01" rows in id order.
inline constexpr const char* kDatasetMagic = "# cxrbench dataset v1";

inline void write_dataset(const fs::path& path, const BinaryDataset& ds, const Provenance& prov) {
  std::ostringstream out;
  out << kDatasetMagic << "\n" << prov.header();
  out << "# dataset\t" << ds.name << "\n";
  out << "# positives\t" << ds.positives() << "\n# negatives\t" << ds.negatives() << "\n";
  out << "id\tlabel\n";
  for (std::size_t i = 0; i < ds.size(); ++i) out << ds.records[i].id << "\t" << ds.labels[i] << "\n";
  write_atomic(path, out.str());
}

/// Re-attach dataset ids to their manifest records.
inline BinaryDataset read_dataset(const fs::path& path, const Manifest& manifest) {
  if (!fs::exists(path)) throw MissingInputError("dataset file not found: " + path.string());
  const auto lines = read_lines(path);
  if (lines.empty() || lines.front() != kDatasetMagic) throw DataError(path.string() + " is not a dataset file");
  std::map<std::string, const ImageRecord*> by_id;
  for (const auto& r : manifest.records) by_id[r.id] = &r;
  BinaryDataset ds;
  bool in_body = false;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split(lines[i], '\t');
    if (!in_body) {
      if (f[0] == "# dataset" && f.size() == 2) ds.name = f[1];
      if (f[0] == "id") in_body = true;
      continue;
    }
    if (lines[i].empty()) continue;
    if (f.size() != 2 || (f[1] != "0" && f[1] != "1")) {
      throw DataError(path.string() + ":" + std::to_string(i + 1) + ": expected id and 0/1 label");
    }
    auto it = by_id.find(f[0]);
    if (it == by_id.end()) throw DataError(path.string() + ": id " + f[0] + " not in manifest");
    ds.records.push_back(*it->second);
    ds.labels.push_back(f[1] == "1" ? 1 : 0);
  }
  return ds;
}

/// Plain-text summary of class counts per source against the reference
/// counts, plus skip tallies and, when given, per-dataset checks.
inline std::string provenance_report(const Manifest& m, const Provenance& prov,
                                     const std::vector<CountCheck>& dataset_checks = {}) {
  std::ostringstream out;
  out << "# cxrbench provenance report\n" << prov.header() << "\n";
  out << "manifest checksum " << m.checksum() << " (" << m.records.size() << " records)\n\n";
  out << "source roots\n";
  for (const auto& [src, root] : m.roots) out << "  " << name_of(src) << "  " << root.generic_string() << "\n";
  out << "\nclass counts (reference in brackets)\n";
  int mismatches = 0;
  for (auto l : kLabels) {
    const int n = m.count(l), want = expected_count(l);
    if (!m.roots.count(source_of(l))) {
      out << "  " << name_of(source_of(l)) << "/" << name_of(l) << "  source not ingested  [" << want << "]\n";
      continue;
    }
    out << "  " << name_of(source_of(l)) << "/" << name_of(l) << "  " << n << "  [" << want << "]"
        << (n == want ? "" : "  MISMATCH") << "\n";
    mismatches += n != want;
  }
  out << "\nskipped files per source (not image / excluded / unlabeled / duplicate)\n";
  for (const auto& [src, s] : m.skips) {
    out << "  " << name_of(src) << "  " << s.not_image << " / " << s.excluded << " / " << s.unlabeled
        << " / " << s.duplicates << "\n";
  }
  if (!dataset_checks.empty()) {
    out << "\ndataset counts (reference in brackets)\n";
    for (const auto& c : dataset_checks) {
      out << "  " << c.what << "  " << c.actual << "  [" << c.expected << "]"
          << (c.matches() ? "" : "  MISMATCH") << "\n";
      mismatches += !c.matches();
    }
  }
  out << "\n" << mismatches << " count mismatch(es); mismatches are warnings, sources drift over time\n";
  return out.str();
}

}  // namespace cxr::data
