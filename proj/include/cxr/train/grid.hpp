#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "cxr/cv/folds.hpp"
#include "cxr/models/model.hpp"
#include "cxr/train/trainer.hpp"

namespace cxr::train {

namespace fs = std::filesystem;

struct RunKey {
  models::Backbone backbone;
  std::string dataset;
  int fold;
};

/// Everything a grid run needs besides the (backbone, dataset, fold) triple.
struct GridContext {
  std::map<std::string, data::BinaryDataset> datasets;
  std::map<std::string, folds::FoldAssignment> folds;
  TrainConfig train;
  Provenance provenance;
  fs::path runs_dir;
  fs::path checkpoint_dir;  // empty: no checkpoints
  fs::path weights_dir;     // pretrained backbone weights
  bool pretrained = true;
  double dropout_rate = 0.5;
  SampleLoader loader;
  int jobs = 1;
  std::function<void(const std::string&)> log;  // progress lines, may be empty
};

struct GridResult {
  std::vector<RunRecord> records;  // one per requested run, in plan order
  int executed = 0;
  int skipped = 0;
  int failed = 0;
};

/// Backbones x datasets x folds, in that nesting order.
inline std::vector<RunKey> plan_grid(const std::vector<models::Backbone>& backbones,
                                     const std::vector<std::string>& datasets, const std::vector<int>& fold_list) {
  std::vector<RunKey> plan;
  for (const auto& d : datasets)
    for (auto b : backbones)
      for (int k : fold_list) plan.push_back({b, d, k});
  return plan;
}

/// Train and evaluate one grid cell. Failures come back as a failed record.
inline RunRecord execute_run(const RunKey& key, const GridContext& ctx) {
  RunRecord failed;
  auto config = models::ModelConfig::for_backbone(key.backbone);
  config.pretrained = ctx.pretrained && key.backbone != models::Backbone::tiny_cnn;
  config.dropout_rate = ctx.dropout_rate;
  config.seed = ctx.train.seed;
  failed.model = config;
  failed.dataset = key.dataset;
  failed.fold = key.fold;
  failed.train = ctx.train;
  failed.provenance = ctx.provenance;
  failed.status = RunStatus::failed;
  try {
    const auto& ds = ctx.datasets.at(key.dataset);
    const auto split = folds::fold_split(ds, ctx.folds.at(key.dataset), key.fold);
    auto model = models::build_model<float>(config, ctx.weights_dir);
    auto log = [&](const EpochLog& e) {
      if (!ctx.log) return;
      char line[160];
      std::snprintf(line, sizeof line, "  %s epoch %d/%d  loss %.4f  train acc %.3f  test acc %.3f",
                    failed.stem().c_str(), e.epoch, ctx.train.epochs, e.train_loss, e.train_accuracy, e.test_accuracy);
      ctx.log(line);
    };
    auto rec = train_fold(model, split.train, split.test, ctx.train, ctx.loader, key.fold, log);
    rec.provenance = ctx.provenance;
    if (!ctx.checkpoint_dir.empty()) {
      const auto path = ctx.checkpoint_dir / rec.stem();
      models::save_checkpoint(model, path,
                              {{"dataset", key.dataset},
                               {"fold", key.fold},
                               {"seed", ctx.provenance.seed},
                               {"config_digest", ctx.provenance.config_digest},
                               {"tool", std::string(kToolName) + " " + kToolVersion},
                               {"train", to_json(ctx.train)}});
      rec.checkpoint = path.filename().string();
    }
    return rec;
  } catch (const std::exception& e) {
    failed.error = e.what();
    return failed;
  }
}

/// Run every planned cell whose record is not already completed. Each record
/// is persisted atomically as soon as its run ends, so an interrupted grid
/// resumes where it stopped.
inline GridResult run_matrix(const std::vector<RunKey>& plan, const GridContext& ctx) {
  fs::create_directories(ctx.runs_dir);
  GridResult result;
  result.records.resize(plan.size());
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const auto path = ctx.runs_dir / run_file_name(plan[i].backbone, plan[i].dataset, plan[i].fold);
    if (fs::exists(path)) {
      try {
        auto rec = read_run_record(path);
        if (rec.status == RunStatus::completed) {
          result.records[i] = std::move(rec);
          ++result.skipped;
          continue;
        }
      } catch (const Error&) {
        // unreadable record: run again
      }
    }
    todo.push_back(i);
  }

  std::mutex mutex;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < todo.size(); t = next++) {
      const auto i = todo[t];
      const auto& key = plan[i];
      if (ctx.log) {
        std::lock_guard lock(mutex);
        ctx.log("run " + models::checkpoint_stem(key.backbone, key.dataset, key.fold));
      }
      auto rec = execute_run(key, ctx);
      write_run_record(ctx.runs_dir / run_file_name(key.backbone, key.dataset, key.fold), rec);
      std::lock_guard lock(mutex);
      if (rec.status == RunStatus::failed) {
        ++result.failed;
        if (ctx.log) ctx.log("run " + rec.stem() + " FAILED: " + rec.error);
      }
      ++result.executed;
      result.records[i] = std::move(rec);
    }
  };
  const int jobs = std::max(1, std::min<int>(ctx.jobs, static_cast<int>(todo.size())));
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  return result;
}

}  // namespace cxr::train
