#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cxr/core/provenance.hpp"
#include "cxr/core/text_io.hpp"
#include "cxr/metrics/metrics.hpp"
#include "cxr/models/model.hpp"
#include "cxr/train/config.hpp"

namespace cxr::train {

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;

  bool operator==(const EpochLog&) const = default;
};

struct Prediction {
  int truth = 0;
  int label = 0;
  double probability = 0.0;  // of the positive class

  bool operator==(const Prediction&) const = default;
};

enum class RunStatus { completed, failed };

struct RunRecord {
  models::ModelConfig model;
  std::string dataset;
  int fold = 0;
  TrainConfig train;
  Provenance provenance;
  RunStatus status = RunStatus::completed;
  std::string error;
  std::vector<EpochLog> epochs;
  std::map<std::string, Prediction> predictions;  // test-set record id -> prediction
  int train_size = 0;
  double wall_time_seconds = 0.0;
  std::string checkpoint;

  std::string stem() const { return models::checkpoint_stem(model.backbone, dataset, fold); }

  metrics::ConfusionCounts confusion() const {
    std::map<std::string, int> truth, pred;
    for (const auto& [id, p] : predictions) {
      truth[id] = p.truth;
      pred[id] = p.label;
    }
    return metrics::confusion_from_predictions(truth, pred);
  }
};

inline std::string run_file_name(models::Backbone b, const std::string& dataset, int fold) {
  return models::checkpoint_stem(b, dataset, fold) + ".run";
}

inline constexpr const char* kRunFormat = "cxrbench run v1";

inline nlohmann::json to_json(const RunRecord& r) {
  nlohmann::json j;
  j["format"] = kRunFormat;
  j["tool"] = std::string(kToolName) + " " + kToolVersion;
  j["seed"] = r.provenance.seed;
  j["config_digest"] = r.provenance.config_digest;
  j["status"] = r.status == RunStatus::completed ? "completed" : "failed";
  if (!r.error.empty()) j["error"] = r.error;
  j["backbone"] = models::name_of(r.model.backbone);
  j["dataset"] = r.dataset;
  j["fold"] = r.fold;
  j["model"] = models::to_json(r.model);
  j["train"] = to_json(r.train);
  j["overrides"] = r.train.overrides();
  j["train_size"] = r.train_size;
  j["test_size"] = r.predictions.size();
  j["wall_time_seconds"] = r.wall_time_seconds;
  if (!r.checkpoint.empty()) j["checkpoint"] = r.checkpoint;
  auto& epochs = j["epochs"] = nlohmann::json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"train_accuracy", e.train_accuracy},
                      {"test_accuracy", e.test_accuracy}});
  }
  auto& preds = j["predictions"] = nlohmann::json::array();
  for (const auto& [id, p] : r.predictions) {
    preds.push_back({{"id", id}, {"truth", p.truth}, {"label", p.label}, {"probability", p.probability}});
  }
  if (r.status == RunStatus::completed && !r.predictions.empty()) {
    const auto c = r.confusion();
    j["confusion"] = {{"tp", c.tp}, {"tn", c.tn}, {"fp", c.fp}, {"fn", c.fn}};
  }
  return j;
}

inline RunRecord run_record_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != kRunFormat) throw DataError("not a run record");
  RunRecord r;
  r.model = models::model_config_from_json(j.at("model"));
  r.dataset = j.at("dataset").get<std::string>();
  r.fold = j.at("fold").get<int>();
  r.train = train_config_from_json(j.at("train"));
  r.provenance = {j.at("seed").get<std::uint64_t>(), j.at("config_digest").get<std::string>()};
  r.status = j.at("status").get<std::string>() == "completed" ? RunStatus::completed : RunStatus::failed;
  r.error = j.value("error", "");
  r.train_size = j.value("train_size", 0);
  r.wall_time_seconds = j.value("wall_time_seconds", 0.0);
  r.checkpoint = j.value("checkpoint", "");
  for (const auto& e : j.at("epochs")) {
    r.epochs.push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(),
                        e.at("train_accuracy").get<double>(), e.at("test_accuracy").get<double>()});
  }
  for (const auto& p : j.at("predictions")) {
    r.predictions[p.at("id").get<std::string>()] = {p.at("truth").get<int>(), p.at("label").get<int>(),
                                                    p.at("probability").get<double>()};
  }
  return r;
}

inline void write_run_record(const std::filesystem::path& path, const RunRecord& r) {
  write_atomic(path, to_json(r).dump(1) + "\n");
}

inline RunRecord read_run_record(const std::filesystem::path& path) {
  const auto text = read_text(path);
  try {
    return run_record_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

/// All run records in a directory, ordered by file name.
inline std::vector<RunRecord> read_run_records(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw MissingInputError("run directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".run") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<RunRecord> out;
  for (const auto& f : files) out.push_back(read_run_record(f));
  return out;
}

}  // namespace cxr::train
