#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <string>

#include "cxr/data/datasets.hpp"
#include "cxr/data/ingest.hpp"
#include "cxr/data/manifest.hpp"
#include "cxr/data/synthetic.hpp"
#include "cxr/train/grid.hpp"
#include "cxr/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace cxr;
using models::Backbone;

namespace {

/// Synthetic sources ingested once per process; per_class images per class.
const data::Manifest& synthetic_manifest() {
  static const data::Manifest m = [] {
    const auto dir = fs::temp_directory_path() / "cxr_test_train_sources";
    fs::remove_all(dir);
    data::write_synthetic_sources(dir, {.per_class = 20, .side = 32, .seed = 2020});
    return data::assemble_manifest({data::ingest_source(dir / "covid_repo", data::Source::covid_repo),
                                    data::ingest_source(dir / "chestxray8", data::Source::chestxray8),
                                    data::ingest_source(dir / "kaggle_pneumonia", data::Source::kaggle_pneumonia)});
  }();
  return m;
}

train::ImageCache& cache() {
  static train::ImageCache c;
  return c;
}

data::BinaryDataset first_n(const data::BinaryDataset& ds, int per_class) {
  data::BinaryDataset out;
  out.name = ds.name;
  int taken[2] = {0, 0};
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (taken[ds.labels[i]]++ >= per_class) continue;
    out.records.push_back(ds.records[i]);
    out.labels.push_back(ds.labels[i]);
  }
  return out;
}

models::Model<float> tiny_model(std::uint64_t seed = 2020) {
  auto c = models::ModelConfig::for_backbone(Backbone::tiny_cnn);
  c.seed = seed;
  return models::build_model<float>(c);
}

train::TrainConfig smoke_config(int epochs) {
  train::TrainConfig t;
  t.epochs = epochs;
  t.learning_rate = 1e-3;
  return t;
}

}  // namespace

TEST(TrainFold, TinyCnnOverfitsThirtyTwoSeparableImages) {
  const auto ds = data::build_dataset(synthetic_manifest(), data::dataset_spec("dataset1"));
  const auto train = first_n(ds, 16);
  ASSERT_EQ(train.size(), 32u);
  data::BinaryDataset test;
  test.name = ds.name;
  auto model = tiny_model();
  const auto rec = train::train_fold(model, train, test, smoke_config(30), cache().loader());
  ASSERT_EQ(rec.epochs.size(), 30u);
  EXPECT_GE(rec.epochs.back().train_accuracy, 0.95);
  for (int i = 0; i < 30; ++i) EXPECT_EQ(rec.epochs[static_cast<std::size_t>(i)].epoch, i + 1);
}

TEST(TrainFold, ZeroEpochsPredictsFromInitialWeights) {
  const auto ds = data::build_dataset(synthetic_manifest(), data::dataset_spec("dataset2"));
  const auto split = folds::fold_split(ds, folds::assign_folds(ds, 1), 2);
  auto model = tiny_model();
  auto fresh = tiny_model();
  const auto rec = train::train_fold(model, split.train, split.test, smoke_config(0), cache().loader(), 2);
  EXPECT_TRUE(rec.epochs.empty());
  EXPECT_EQ(rec.predictions, train::predict(fresh, split.test, cache().loader()));
  EXPECT_EQ(rec.predictions.size(), split.test.size());
}

TEST(TrainFold, IdenticalSeedsGiveIdenticalEpochLogs) {
  const auto ds = data::build_dataset(synthetic_manifest(), data::dataset_spec("dataset3"));
  const auto split = folds::fold_split(ds, folds::assign_folds(ds, 5), 3);
  auto a = tiny_model(), b = tiny_model();
  const auto ra = train::train_fold(a, split.train, split.test, smoke_config(3), cache().loader(), 3);
  const auto rb = train::train_fold(b, split.train, split.test, smoke_config(3), cache().loader(), 3);
  EXPECT_EQ(ra.epochs, rb.epochs);
  EXPECT_EQ(ra.predictions, rb.predictions);
}

TEST(TrainFold, LeakageAndEmptyTrainSetAreFatal) {
  const auto ds = data::build_dataset(synthetic_manifest(), data::dataset_spec("dataset1"));
  auto model = tiny_model();
  EXPECT_THROW(train::train_fold(model, ds, first_n(ds, 1), smoke_config(1), cache().loader()), TrainingError);
  data::BinaryDataset empty;
  EXPECT_THROW(train::train_fold(model, empty, ds, smoke_config(1), cache().loader()), TrainingError);
}

TEST(TrainFold, NonFiniteLossAborts) {
  const auto ds = first_n(data::build_dataset(synthetic_manifest(), data::dataset_spec("dataset1")), 3);
  train::SampleLoader poisoned = [](const data::ImageRecord&, Backbone) {
    return nn::Tensor<float>({3, 224, 224}, std::numeric_limits<float>::quiet_NaN());
  };
  auto model = tiny_model();
  try {
    train::train_fold(model, ds, data::BinaryDataset{}, smoke_config(1), poisoned);
    FAIL();
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite loss"), std::string::npos);
  }
}

TEST(Predict, ArgmaxAndTieRule) {
  const float neg[2] = {0.9f, 0.1f};
  const auto p = train::prediction_from_row(neg);
  EXPECT_EQ(p.label, 0);
  EXPECT_FLOAT_EQ(static_cast<float>(p.probability), 0.1f);
  const float tie[2] = {0.5f, 0.5f};
  EXPECT_EQ(train::prediction_from_row(tie).label, 1);
}

TEST(Predict, OneByOneEqualsBatched) {
  const auto ds = data::build_dataset(synthetic_manifest(), data::dataset_spec("dataset2"));
  auto model = tiny_model(7);
  const auto single = train::predict(model, ds, cache().loader(), 1);
  const auto batched = train::predict(model, ds, cache().loader(), 8);
  ASSERT_EQ(single.size(), batched.size());
  for (const auto& [id, p] : single) {
    EXPECT_EQ(p.label, batched.at(id).label) << id;
    EXPECT_NEAR(p.probability, batched.at(id).probability, 1e-6) << id;
  }
}

TEST(RunRecord, JsonRoundTrip) {
  const auto ds = data::build_dataset(synthetic_manifest(), data::dataset_spec("dataset1"));
  const auto split = folds::fold_split(ds, folds::assign_folds(ds, 3), 4);
  auto model = tiny_model();
  auto rec = train::train_fold(model, split.train, split.test, smoke_config(2), cache().loader(), 4);
  rec.provenance = {3, "cafe"};
  const auto path = fs::temp_directory_path() / "cxr_test_record" / train::run_file_name(Backbone::tiny_cnn, "dataset1", 4);
  train::write_run_record(path, rec);
  EXPECT_EQ(path.filename().string(), "tiny_cnn_dataset1_fold4.run");
  const auto back = train::read_run_record(path);
  EXPECT_EQ(back.epochs.size(), 2u);
  EXPECT_EQ(back.predictions.size(), split.test.size());
  EXPECT_EQ(back.confusion(), rec.confusion());
  EXPECT_EQ(back.train.learning_rate, 1e-3);
  EXPECT_EQ(back.provenance.config_digest, "cafe");
  const auto json = nlohmann::json::parse(read_text(path));
  EXPECT_EQ(json.at("overrides").at(1), "learning_rate=0.001 (default 1e-05)");
  EXPECT_EQ(json.at("tool"), "cxrbench 1.0.0");
}

TEST(RunMatrix, FilteredGridIsResumableAndRecordsFailures) {
  const auto runs = fs::temp_directory_path() / "cxr_test_grid";
  fs::remove_all(runs);
  train::GridContext ctx;
  const auto ds = data::build_dataset(synthetic_manifest(), data::dataset_spec("dataset2"));
  ctx.datasets["dataset2"] = ds;
  ctx.folds["dataset2"] = folds::assign_folds(ds, 2020);
  ctx.train = smoke_config(1);
  ctx.runs_dir = runs / "runs";
  ctx.checkpoint_dir = runs / "checkpoints";
  ctx.weights_dir = runs / "no_weights";
  ctx.loader = cache().loader();

  const auto plan = train::plan_grid({Backbone::tiny_cnn}, {"dataset2"}, {1, 2, 3, 4, 5});
  const auto first = train::run_matrix(plan, ctx);
  EXPECT_EQ(first.records.size(), 5u);
  EXPECT_EQ(first.executed, 5);
  EXPECT_EQ(first.failed, 0);
  for (int k = 1; k <= 5; ++k) {
    EXPECT_TRUE(fs::exists(ctx.runs_dir / ("tiny_cnn_dataset2_fold" + std::to_string(k) + ".run")));
    EXPECT_TRUE(fs::exists(ctx.checkpoint_dir / ("tiny_cnn_dataset2_fold" + std::to_string(k))));
  }
  const auto again = train::run_matrix(plan, ctx);
  EXPECT_EQ(again.executed, 0);
  EXPECT_EQ(again.skipped, 5);

  // a pretrained backbone without weights fails; the grid carries on
  const auto mixed = train::run_matrix(train::plan_grid({Backbone::resnet50, Backbone::tiny_cnn}, {"dataset2"}, {1}), ctx);
  EXPECT_EQ(mixed.failed, 1);
  EXPECT_EQ(mixed.skipped, 1);
  EXPECT_EQ(mixed.records[0].status, train::RunStatus::failed);
  EXPECT_NE(mixed.records[0].error.find("export_weights.py"), std::string::npos);
  EXPECT_EQ(train::read_run_record(ctx.runs_dir / "resnet50_dataset2_fold1.run").status, train::RunStatus::failed);
}

TEST(RunMatrix, FullPlanHasSeventyFiveCells) {
  const std::vector<Backbone> five(models::kReferenceBackbones.begin(), models::kReferenceBackbones.end());
  EXPECT_EQ(train::plan_grid(five, {"dataset1", "dataset2", "dataset3"}, {1, 2, 3, 4, 5}).size(), 75u);
}

TEST(TrainConfig, DefaultsAndDeviceSelection) {
  const train::TrainConfig c;
  EXPECT_EQ(c.epochs, 30);
  EXPECT_EQ(c.batch_size, 3);
  EXPECT_EQ(c.learning_rate, 1e-5);
  EXPECT_EQ(c.beta1, 0.9);
  EXPECT_EQ(c.beta2, 0.999);
  EXPECT_TRUE(c.overrides().empty());
  auto gpu = c;
  gpu.device = "cuda:0";
  EXPECT_THROW(gpu.validate(), UsageError);
}
