#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cxr/core/digest.hpp"
#include "cxr/core/provenance.hpp"
#include "cxr/core/text_io.hpp"
#include "cxr/data/ingest.hpp"
#include "cxr/data/records.hpp"

namespace cxr::data {

/// Skip tallies per source, carried in the manifest so the provenance report
/// can be regenerated later.
struct SkipCounts {
  int not_image = 0, excluded = 0, unlabeled = 0, duplicates = 0;

  bool operator==(const SkipCounts&) const = default;
};

struct Manifest {
  std::vector<ImageRecord> records;  // sorted by id
  std::map<Source, fs::path> roots;
  std::map<Source, SkipCounts> skips;

  /// SHA-256 over the sorted ids, one per line.
  std::string checksum() const {
    Sha256 h;
    for (const auto& r : records) h.update(r.id).update("\n");
    return h.hex();
  }

  int count(Label l) const {
    return static_cast<int>(std::count_if(records.begin(), records.end(),
                                          [l](const ImageRecord& r) { return r.label == l; }));
  }
};

/// Merge per-source scans into one id-ordered manifest.
inline Manifest assemble_manifest(const std::vector<IngestReport>& reports) {
  Manifest m;
  for (const auto& rep : reports) {
    if (m.roots.count(rep.source)) {
      throw UsageError("source " + std::string(name_of(rep.source)) + " given twice");
    }
    m.roots[rep.source] = rep.root;
    m.skips[rep.source] = {rep.not_image, rep.excluded, rep.unlabeled, rep.duplicates};
    m.records.insert(m.records.end(), rep.records.begin(), rep.records.end());
  }
  std::sort(m.records.begin(), m.records.end(),
            [](const ImageRecord& a, const ImageRecord& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < m.records.size(); ++i) {
    if (m.records[i].id == m.records[i - 1].id) throw DataError("duplicate id " + m.records[i].id);
  }
  for (const auto& r : m.records) {
    if (source_of(r.label) != r.source) {
      throw DataError("label " + std::string(name_of(r.label)) + " cannot come from " +
                      std::string(name_of(r.source)) + " (" + r.id + ")");
    }
  }
  return m;
}

inline constexpr const char* kManifestMagic = "# cxrbench manifest v1";

inline std::string format_manifest(const Manifest& m, const Provenance& prov) {
  std::ostringstream out;
  out << kManifestMagic << "\n" << prov.header();
  for (const auto& [src, root] : m.roots) out << "# root\t" << name_of(src) << "\t" << root.generic_string() << "\n";
  for (const auto& [src, s] : m.skips) {
    out << "# skipped\t" << name_of(src) << "\t" << s.not_image << "\t" << s.excluded << "\t"
        << s.unlabeled << "\t" << s.duplicates << "\n";
  }
  out << "# records\t" << m.records.size() << "\n";
  out << "# checksum\t" << m.checksum() << "\n";
  out << "id\tsource\tlabel\tpath\tdigest\twidth\theight\tchannels\n";
  for (const auto& r : m.records) {
    const auto rel = r.path.lexically_relative(m.roots.at(r.source)).generic_string();
    out << r.id << "\t" << name_of(r.source) << "\t" << name_of(r.label) << "\t" << rel << "\t"
        << r.digest << "\t" << r.width << "\t" << r.height << "\t" << r.channels << "\n";
  }
  return out.str();
}

inline void write_manifest(const fs::path& path, const Manifest& m, const Provenance& prov) {
  write_atomic(path, format_manifest(m, prov));
}

inline Manifest read_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw MissingInputError("manifest not found: " + path.string());
  const auto lines = read_lines(path);
  if (lines.empty() || lines.front() != kManifestMagic) throw DataError(path.string() + " is not a manifest");
  Manifest m;
  std::string checksum;
  bool in_body = false;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& line = lines[i];
    if (line.empty()) continue;
    const auto f = split(line, '\t');
    if (!in_body) {
      if (f[0] == "# root" && f.size() == 3) m.roots[parse_source(f[1])] = f[2];
      if (f[0] == "# skipped" && f.size() == 6) {
        m.skips[parse_source(f[1])] = {std::stoi(f[2]), std::stoi(f[3]), std::stoi(f[4]), std::stoi(f[5])};
      }
      if (f[0] == "# checksum" && f.size() == 2) checksum = f[1];
      if (f[0] == "id") in_body = true;
      continue;
    }
    if (f.size() != 8) throw DataError(path.string() + ":" + std::to_string(i + 1) + ": expected 8 fields");
    ImageRecord r;
    r.id = f[0];
    r.source = parse_source(f[1]);
    r.label = parse_label(f[2]);
    auto root = m.roots.find(r.source);
    if (root == m.roots.end()) throw DataError(path.string() + ": no root for " + f[1]);
    r.path = root->second / fs::path(f[3]);
    r.digest = f[4];
    r.width = std::stoi(f[5]);
    r.height = std::stoi(f[6]);
    r.channels = std::stoi(f[7]);
    m.records.push_back(std::move(r));
  }
  if (!std::is_sorted(m.records.begin(), m.records.end(),
                      [](const ImageRecord& a, const ImageRecord& b) { return a.id < b.id; })) {
    throw DataError(path.string() + ": records are not sorted by id");
  }
  if (!checksum.empty() && checksum != m.checksum()) {
    throw DataError(path.string() + ": checksum mismatch (file edited or truncated)");
  }
  return m;
}

}  // namespace cxr::data
