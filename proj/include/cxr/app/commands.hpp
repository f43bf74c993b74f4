#pragma once

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cxr/core/digest.hpp"
#include "cxr/core/error.hpp"
#include "cxr/core/provenance.hpp"
#include "cxr/cv/folds.hpp"
#include "cxr/data/datasets.hpp"
#include "cxr/data/ingest.hpp"
#include "cxr/data/manifest.hpp"
#include "cxr/data/synthetic.hpp"
#include "cxr/metrics/fixtures.hpp"
#include "cxr/report/comparison.hpp"
#include "cxr/report/plots.hpp"
#include "cxr/report/tables.hpp"
#include "cxr/train/grid.hpp"

#ifndef CXR_DEFAULT_FIXTURES
#define CXR_DEFAULT_FIXTURES "data/published_tables.tsv"
#endif

namespace cxr::app {

namespace fs = std::filesystem;

inline constexpr const char* kWeightsEnv = "CXR_WEIGHTS_DIR";

/// Every configuration key. Command-line flags carry the same names.
struct Settings {
  fs::path out = "cxr_out";
  std::uint64_t seed = 2020;
  fs::path covid_repo, chestxray8, kaggle_pneumonia;
  std::vector<std::string> datasets = {"dataset1", "dataset2", "dataset3"};
  std::vector<std::string> backbones = {"inceptionv3", "resnet50", "resnet101", "resnet152", "inception_resnetv2"};
  std::vector<int> folds = {1, 2, 3, 4, 5};
  int epochs = 30;
  int batch_size = 3;
  double learning_rate = 1e-5;
  bool pretrained = true;
  fs::path weights_dir;
  std::string device;  // empty: CXR_DEVICE, else cpu
  int jobs = 1;
  int negative_limit = 0;  // 0: keep every negative
  int cache_mb = 1024;
  fs::path fixtures = CXR_DEFAULT_FIXTURES;
  int synthetic_per_class = 20;
  int synthetic_side = 64;
};

/// Resolved settings as JSON. The config digest is taken over the form without `out`.
inline nlohmann::json to_json(const Settings& s, bool with_out = true) {
  nlohmann::json j = {{"seed", s.seed},
                      {"covid_repo", s.covid_repo.generic_string()},
                      {"chestxray8", s.chestxray8.generic_string()},
                      {"kaggle_pneumonia", s.kaggle_pneumonia.generic_string()},
                      {"datasets", s.datasets},
                      {"backbones", s.backbones},
                      {"folds", s.folds},
                      {"epochs", s.epochs},
                      {"batch_size", s.batch_size},
                      {"learning_rate", s.learning_rate},
                      {"pretrained", s.pretrained},
                      {"weights_dir", s.weights_dir.generic_string()},
                      {"device", s.device},
                      {"jobs", s.jobs},
                      {"negative_limit", s.negative_limit},
                      {"cache_mb", s.cache_mb},
                      {"fixtures", s.fixtures.generic_string()},
                      {"synthetic_per_class", s.synthetic_per_class},
                      {"synthetic_side", s.synthetic_side}};
  if (with_out) j["out"] = s.out.generic_string();
  return j;
}

inline std::string config_digest(const Settings& s) { return sha256_hex(to_json(s, false).dump()).substr(0, 16); }

inline Provenance provenance_of(const Settings& s) { return {s.seed, config_digest(s)}; }

/// Fill environment-dependent defaults and check ranges.
inline Settings resolve(Settings s) {
  s.device = train::device_from_env(s.device);
  if (s.weights_dir.empty())
    if (const char* env = std::getenv(kWeightsEnv); env && *env) s.weights_dir = env;
  for (const auto& d : s.datasets) data::dataset_spec(d);
  for (const auto& b : s.backbones) models::parse_backbone(b);
  for (int k : s.folds)
    if (k < 1 || k > folds::kFolds) throw UsageError("fold " + std::to_string(k) + " out of range 1..5");
  if (s.jobs < 1) throw UsageError("jobs must be >= 1");
  if (s.negative_limit < 0) throw UsageError("negative_limit must be >= 0");
  if (s.cache_mb < 0) throw UsageError("cache_mb must be >= 0");
  return s;
}

/// Output directory layout.
struct Workspace {
  fs::path root;

  fs::path manifest() const { return root / "manifest.tsv"; }
  fs::path provenance() const { return root / "provenance.txt"; }
  fs::path config_echo() const { return root / "config.json"; }
  fs::path dataset(const std::string& name) const { return root / "datasets" / (name + ".tsv"); }
  fs::path folds(const std::string& name) const { return root / "folds" / (name + ".folds"); }
  fs::path runs() const { return root / "runs"; }
  fs::path checkpoints() const { return root / "checkpoints"; }
  fs::path table(const std::string& name) const { return root / "tables" / (name + ".tsv"); }
  fs::path plots() const { return root / "plots"; }
  fs::path comparison() const { return root / "comparison.tsv"; }
};

using Log = std::function<void(const std::string&)>;

inline Log stderr_log() {
  return [](const std::string& line) { std::cerr << line << "\n"; };
}

inline void echo_config(const Settings& s, const std::string& command) {
  const Workspace ws{s.out};
  auto j = to_json(s);
  j["command"] = command;
  j["config_digest"] = config_digest(s);
  j["tool"] = std::string(kToolName) + " " + kToolVersion;
  write_atomic(ws.config_echo(), j.dump(2) + "\n");
}

inline std::vector<std::pair<data::Source, fs::path>> configured_sources(const Settings& s) {
  std::vector<std::pair<data::Source, fs::path>> out;
  if (!s.covid_repo.empty()) out.emplace_back(data::Source::covid_repo, s.covid_repo);
  if (!s.chestxray8.empty()) out.emplace_back(data::Source::chestxray8, s.chestxray8);
  if (!s.kaggle_pneumonia.empty()) out.emplace_back(data::Source::kaggle_pneumonia, s.kaggle_pneumonia);
  return out;
}

inline data::Manifest ingest(const Settings& s, const Log& log) {
  const auto sources = configured_sources(s);
  if (sources.empty()) throw UsageError("no source directories configured (covid_repo, chestxray8, kaggle_pneumonia)");
  for (const auto& [src, root] : sources)
    if (!fs::is_directory(root)) throw MissingInputError("source directory not found: " + root.string());
  std::vector<data::IngestReport> reports;
  for (const auto& [src, root] : sources) {
    reports.push_back(data::ingest_source(root, src, s.jobs));
    const auto& r = reports.back();
    log("ingest " + std::string(data::name_of(src)) + ": " + std::to_string(r.records.size()) + " records, " +
        std::to_string(r.skipped()) + " skipped");
    for (const auto& w : r.warnings) log("  warning: " + w);
  }
  const auto m = data::assemble_manifest(reports);
  const Workspace ws{s.out};
  const auto prov = provenance_of(s);
  data::write_manifest(ws.manifest(), m, prov);
  write_atomic(ws.provenance(), data::provenance_report(m, prov));
  log("wrote " + ws.manifest().string() + " (" + std::to_string(m.records.size()) + " records)");
  return m;
}

inline data::Manifest load_or_ingest(const Settings& s, const Log& log) {
  const Workspace ws{s.out};
  if (fs::exists(ws.manifest())) return data::read_manifest(ws.manifest());
  if (configured_sources(s).empty()) throw MissingInputError("manifest not found: " + ws.manifest().string() + " (run ingest first)");
  return ingest(s, log);
}

inline std::map<std::string, data::BinaryDataset> build_datasets(const Settings& s, const data::Manifest& m,
                                                                  const Log& log) {
  const Workspace ws{s.out};
  const auto prov = provenance_of(s);
  std::map<std::string, data::BinaryDataset> out;
  std::vector<data::CountCheck> checks;
  for (const auto& name : s.datasets) {
    auto ds = data::build_dataset(m, data::dataset_spec(name), &checks);
    if (s.negative_limit > 0) ds = data::limit_negatives(ds, s.negative_limit, Rng::derive(s.seed, 101));
    data::write_dataset(ws.dataset(name), ds, prov);
    log(name + ": " + std::to_string(ds.positives()) + " positive, " + std::to_string(ds.negatives()) + " negative");
    out[name] = std::move(ds);
  }
  for (const auto& c : checks)
    if (!c.matches())
      log("warning: " + c.what + " has " + std::to_string(c.actual) + " images, reference " + std::to_string(c.expected));
  write_atomic(ws.provenance(), data::provenance_report(m, prov, checks));
  return out;
}

inline std::map<std::string, data::BinaryDataset> load_or_build_datasets(const Settings& s, const data::Manifest& m,
                                                                         const Log& log) {
  const Workspace ws{s.out};
  bool all = true;
  for (const auto& name : s.datasets) all = all && fs::exists(ws.dataset(name));
  if (!all) return build_datasets(s, m, log);
  std::map<std::string, data::BinaryDataset> out;
  for (const auto& name : s.datasets) out[name] = data::read_dataset(ws.dataset(name), m);
  return out;
}

inline std::map<std::string, folds::FoldAssignment> split(const Settings& s,
                                                          const std::map<std::string, data::BinaryDataset>& sets,
                                                          const Log& log) {
  const Workspace ws{s.out};
  std::map<std::string, folds::FoldAssignment> out;
  for (const auto& [name, ds] : sets) {
    auto a = folds::assign_folds(ds, s.seed);
    folds::write_folds(ws.folds(name), a, provenance_of(s));
    log("wrote " + ws.folds(name).string());
    out[name] = std::move(a);
  }
  return out;
}

/// Reuse fold files whose membership matches the dataset; otherwise split.
inline std::map<std::string, folds::FoldAssignment> load_or_split(const Settings& s,
                                                                  const std::map<std::string, data::BinaryDataset>& sets,
                                                                  const Log& log) {
  const Workspace ws{s.out};
  std::map<std::string, folds::FoldAssignment> out;
  std::map<std::string, data::BinaryDataset> todo;
  for (const auto& [name, ds] : sets) {
    if (fs::exists(ws.folds(name))) {
      auto a = folds::read_folds(ws.folds(name));
      bool same = a.fold_of.size() == ds.size();
      for (const auto& r : ds.records) same = same && a.fold_of.count(r.id);
      if (!same) throw DataError(ws.folds(name).string() + " does not match dataset " + name + "; rerun split");
      out[name] = std::move(a);
    } else {
      todo[name] = ds;
    }
  }
  for (auto& [name, a] : split(s, todo, log)) out[name] = std::move(a);
  return out;
}

inline train::TrainConfig train_config(const Settings& s) {
  train::TrainConfig t;
  t.epochs = s.epochs;
  t.batch_size = s.batch_size;
  t.learning_rate = s.learning_rate;
  t.seed = s.seed;
  t.device = s.device.empty() ? train::device_from_env("") : s.device;
  t.validate();
  return t;
}

/// Tables for every configured dataset that has records; returns them.
inline std::vector<report::MetricTable> write_tables(const Settings& s, const std::vector<train::RunRecord>& records,
                                                     const Log& log) {
  const Workspace ws{s.out};
  std::vector<std::string> names;
  for (const auto& r : records)
    if (std::find(names.begin(), names.end(), r.dataset) == names.end()) names.push_back(r.dataset);
  std::sort(names.begin(), names.end());
  std::vector<report::MetricTable> tables;
  for (const auto& name : names) {
    tables.push_back(report::build_metric_table(name, records));
    report::write_metric_table(ws.table(name), tables.back(), provenance_of(s));
    log("wrote " + ws.table(name).string());
  }
  return tables;
}

inline int cmd_ingest(const Settings& s, const Log& log) {
  echo_config(s, "ingest");
  ingest(s, log);
  return 0;
}

inline int cmd_build_datasets(const Settings& s, const Log& log) {
  echo_config(s, "build-datasets");
  build_datasets(s, load_or_ingest(s, log), log);
  return 0;
}

inline int cmd_split(const Settings& s, const Log& log) {
  echo_config(s, "split");
  const auto m = load_or_ingest(s, log);
  split(s, load_or_build_datasets(s, m, log), log);
  return 0;
}

inline int cmd_run(const Settings& s, const Log& log) {
  echo_config(s, "run");
  const auto config = train_config(s);
  const Workspace ws{s.out};
  const auto m = load_or_ingest(s, log);
  const auto sets = load_or_build_datasets(s, m, log);
  train::GridContext ctx;
  ctx.datasets = sets;
  ctx.folds = load_or_split(s, sets, log);
  ctx.train = config;
  ctx.provenance = provenance_of(s);
  ctx.runs_dir = ws.runs();
  ctx.checkpoint_dir = ws.checkpoints();
  ctx.weights_dir = s.weights_dir;
  ctx.pretrained = s.pretrained;
  train::ImageCache cache(static_cast<std::size_t>(s.cache_mb) << 20);
  ctx.loader = cache.loader();
  ctx.jobs = s.jobs;
  ctx.log = log;
  for (const auto& o : config.overrides()) log("override: " + o);
  std::vector<models::Backbone> backbones;
  for (const auto& b : s.backbones) backbones.push_back(models::parse_backbone(b));
  const auto result = train::run_matrix(train::plan_grid(backbones, s.datasets, s.folds), ctx);
  log("runs: " + std::to_string(result.executed) + " executed, " + std::to_string(result.skipped) + " already complete, " +
      std::to_string(result.failed) + " failed");
  write_tables(s, result.records, log);
  if (result.failed > 0) {
    for (const auto& r : result.records)
      if (r.status == train::RunStatus::failed) log("FAILED " + r.stem() + ": " + r.error);
    return static_cast<int>(ExitCode::discrepancy);
  }
  return 0;
}

inline int cmd_report(const Settings& s, const Log& log) {
  echo_config(s, "report");
  const Workspace ws{s.out};
  const auto records = train::read_run_records(ws.runs());
  if (records.empty()) throw MissingInputError("no run records in " + ws.runs().string());
  const auto tables = write_tables(s, records, log);
  const auto plots = report::write_curve_plots(ws.plots(), records, provenance_of(s));
  log("wrote " + std::to_string(plots.size()) + " plots to " + ws.plots().string());
  report::write_comparison(ws.comparison(), report::comparison_rows(tables), provenance_of(s));
  log("wrote " + ws.comparison().string());
  return 0;
}

/// Recompute the bundled reference tables; 0 iff nothing disagrees.
inline int cmd_validate(const Settings& s, std::ostream& out) {
  const auto rows = metrics::load_fixtures(s.fixtures);
  auto found = metrics::validate_against_reference(rows);
  const auto pooling = metrics::check_pooling(rows);
  found.insert(found.end(), pooling.begin(), pooling.end());
  out << "validated " << rows.size() << " rows from " << s.fixtures.string() << ": " << found.size()
      << " discrepancies\n";
  if (!found.empty()) out << metrics::format_discrepancies(found);
  return found.empty() ? 0 : static_cast<int>(ExitCode::discrepancy);
}

/// Synthetic source trees under `out`, plus a config pointing at them.
inline int cmd_synth(const Settings& s, const Log& log) {
  data::write_synthetic_sources(s.out, {.per_class = s.synthetic_per_class, .side = s.synthetic_side, .seed = s.seed});
  log("wrote synthetic sources to " + s.out.string());
  return 0;
}

}  // namespace cxr::app
