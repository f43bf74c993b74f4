#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cxr/core/provenance.hpp"
#include "cxr/core/random.hpp"
#include "cxr/core/text_io.hpp"
#include "cxr/data/records.hpp"

namespace cxr::folds {

inline constexpr int kFolds = 5;

/// Records of fold i (1-based) when n records are dealt into k folds: the
/// n mod k extra records go to the highest-numbered folds.
inline int fold_size(int n, int fold, int k = kFolds) {
  return n / k + (fold > k - n % k ? 1 : 0);
}

struct FoldAssignment {
  std::string dataset_name;
  std::uint64_t seed = 2020;
  std::string generator = Rng::kAlgorithm;
  std::map<std::string, int> fold_of;  // record id -> fold in 1..5
};

/// Stratified assignment: each class is shuffled on its own stream of the
/// seeded generator, then dealt in contiguous runs of fold_size records.
inline FoldAssignment assign_folds(const data::BinaryDataset& ds, std::uint64_t seed) {
  if (ds.size() == 0) throw DataError("cannot split empty dataset " + ds.name);
  FoldAssignment a;
  a.dataset_name = ds.name;
  a.seed = seed;
  for (int cls : {1, 0}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (ds.labels[i] == cls) members.push_back(i);
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(cls)));
    rng.shuffle(std::span<std::size_t>(members));
    const int n = static_cast<int>(members.size());
    std::size_t next = 0;
    for (int fold = 1; fold <= kFolds; ++fold) {
      for (int j = 0; j < fold_size(n, fold); ++j) a.fold_of[ds.records[members[next++]].id] = fold;
    }
  }
  return a;
}

struct Split {
  data::BinaryDataset train;
  data::BinaryDataset test;
};

/// Fold k is the test set; the other four folds train. Both keep dataset order.
inline Split fold_split(const data::BinaryDataset& ds, const FoldAssignment& a, int k) {
  if (k < 1 || k > kFolds) throw UsageError("fold index " + std::to_string(k) + " out of range 1..5");
  Split s;
  s.train.name = s.test.name = ds.name;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto it = a.fold_of.find(ds.records[i].id);
    if (it == a.fold_of.end()) throw DataError("record " + ds.records[i].id + " has no fold");
    auto& side = it->second == k ? s.test : s.train;
    side.records.push_back(ds.records[i]);
    side.labels.push_back(ds.labels[i]);
  }
  if (a.fold_of.size() != ds.size()) {
    throw DataError("fold assignment for " + a.dataset_name + " covers " + std::to_string(a.fold_of.size()) +
                    " ids but the dataset has " + std::to_string(ds.size()));
  }
  return s;
}

inline constexpr const char* kFoldMagic = "# cxrbench folds v1";

inline std::string format_folds(const FoldAssignment& a, const Provenance& prov) {
  std::ostringstream out;
  out << kFoldMagic << "\n" << prov.header();
  out << "# dataset\t" << a.dataset_name << "\n";
  out << "# fold_seed\t" << a.seed << "\n";
  out << "# generator\t" << a.generator << "\n";
  out << "id\tfold\n";
  for (const auto& [id, fold] : a.fold_of) out << id << "\t" << fold << "\n";
  return out.str();
}

inline void write_folds(const std::filesystem::path& path, const FoldAssignment& a, const Provenance& prov) {
  write_atomic(path, format_folds(a, prov));
}

inline FoldAssignment read_folds(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingInputError("fold file not found: " + path.string());
  const auto lines = read_lines(path);
  if (lines.empty() || lines.front() != kFoldMagic) throw DataError(path.string() + " is not a fold file");
  FoldAssignment a;
  bool in_body = false;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split(lines[i], '\t');
    if (!in_body) {
      if (f.size() == 2 && f[0] == "# dataset") a.dataset_name = f[1];
      if (f.size() == 2 && f[0] == "# fold_seed") a.seed = std::stoull(f[1]);
      if (f.size() == 2 && f[0] == "# generator") a.generator = f[1];
      if (f[0] == "id") in_body = true;
      continue;
    }
    const int fold = f.size() == 2 ? std::atoi(f[1].c_str()) : 0;
    if (fold < 1 || fold > kFolds) throw DataError(path.string() + ":" + std::to_string(i + 1) + ": bad fold row");
    if (!a.fold_of.emplace(f[0], fold).second) throw DataError(path.string() + ": duplicate id " + f[0]);
  }
  if (a.generator != Rng::kAlgorithm) {
    throw DataError(path.string() + " was made with generator " + a.generator + ", this build uses " +
                    Rng::kAlgorithm);
  }
  return a;
}

}  // namespace cxr::folds
