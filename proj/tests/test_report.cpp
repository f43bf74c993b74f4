#include <gtest/gtest.h>

#include <filesystem>
#include <set>
#include <string>

#include <opencv2/imgcodecs.hpp>

#include "cxr/metrics/fixtures.hpp"
#include "cxr/report/comparison.hpp"
#include "cxr/report/plots.hpp"
#include "cxr/report/tables.hpp"

namespace fs = std::filesystem;
using namespace cxr;
using models::Backbone;

namespace {

/// A completed record whose predictions tally to `c`, with a simple learning curve.
train::RunRecord record_with(Backbone b, const std::string& dataset, int fold, const metrics::ConfusionCounts& c,
                             int epochs = 30) {
  train::RunRecord r;
  r.model = models::ModelConfig::for_backbone(b);
  r.dataset = dataset;
  r.fold = fold;
  int n = 0;
  auto add = [&](std::int64_t count, int truth, int label) {
    for (std::int64_t i = 0; i < count; ++i) r.predictions["img" + std::to_string(n++)] = {truth, label, label ? 0.9 : 0.1};
  };
  add(c.tp, 1, 1);
  add(c.tn, 0, 0);
  add(c.fp, 0, 1);
  add(c.fn, 1, 0);
  for (int e = 1; e <= epochs; ++e) {
    const double t = static_cast<double>(e) / epochs;
    r.epochs.push_back({e, 0.7 * (1 - t) + 0.01 * static_cast<int>(b), 0.5 + 0.45 * t, 0.5 + 0.4 * t});
  }
  return r;
}

Backbone backbone_named(const std::string& display) {
  for (auto b : models::kReferenceBackbones)
    if (models::display_name(b) == display || models::name_of(b) == display) return b;
  throw UsageError("no backbone " + display);
}

/// Records reproducing every published fold row.
std::vector<train::RunRecord> published_records() {
  std::vector<train::RunRecord> out;
  for (const auto& row : metrics::load_fixtures(CXR_DEFAULT_FIXTURES))
    if (row.fold != metrics::kPooledFold) out.push_back(record_with(backbone_named(row.model), row.dataset, row.fold, row.counts));
  return out;
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("cxr_test_report_" + name);
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST(MetricTable, PublishedCountsReproducePublishedTables) {
  const auto records = published_records();
  ASSERT_EQ(records.size(), 75u);
  const auto fixtures = metrics::load_fixtures(CXR_DEFAULT_FIXTURES);
  int compared = 0;
  for (const std::string dataset : {"dataset1", "dataset2", "dataset3"}) {
    const auto t = report::build_metric_table(dataset, records);
    ASSERT_EQ(t.rows.size(), 30u) << dataset;  // 5 models x (5 folds + pooled)
    for (const auto& row : t.rows) {
      for (const auto& f : fixtures) {
        if (f.dataset != dataset || f.fold != row.fold || backbone_named(f.model) != row.backbone) continue;
        EXPECT_EQ(row.counts, f.counts) << f.label();
        for (std::size_t k = 0; k < 5; ++k)
          EXPECT_NEAR(row.metrics[metrics::kMetricNames[k]]->percent(), *f.percent[k], 0.1 + 1e-9) << f.label();
        ++compared;
      }
    }
  }
  EXPECT_EQ(compared, 90);
}

TEST(MetricTable, LayoutMatchesReferenceTables) {
  const auto t = report::build_metric_table("dataset1", published_records());
  const auto text = report::format_metric_table(t, {7, "abc"});
  const auto lines = split(text, '\n');
  EXPECT_EQ(lines[0], "# cxrbench metric table v1");
  EXPECT_NE(text.find("# seed 7\n"), std::string::npos);
  EXPECT_NE(text.find("# config_digest abc\n"), std::string::npos);
  EXPECT_NE(text.find("# tool cxrbench 1.0.0\n"), std::string::npos);
  EXPECT_NE(text.find("Models/Fold\t\tTP\tTN\tFP\tFN\tACC (%)\tREC (%)\tSPE (%)\tPRE (%)\tF1 (%)\n"), std::string::npos);
  EXPECT_NE(text.find("InceptionV3\tFold1\t60\t519\t41\t8\t92.2\t88.2\t92.7\t59.4\t71.0\n"), std::string::npos);
  EXPECT_NE(text.find("\tTotal / Average\t309\t2688\t112\t32\t95.4\t90.6\t96.0\t73.4\t81.1\n"), std::string::npos);
  // ResNet50 pooled accuracy
  const auto pooled = report::pooled_row(t, Backbone::resnet50);
  ASSERT_TRUE(pooled);
  EXPECT_EQ(metrics::format_percent(pooled->metrics.accuracy), "96.1");
}

TEST(MetricTable, IncompleteAndFailedRunsHaveNoPooledRow) {
  std::vector<train::RunRecord> records;
  for (int k = 1; k <= 3; ++k) records.push_back(record_with(Backbone::resnet50, "dataset2", k, {60, 290, 9, 8}));
  auto failed = record_with(Backbone::resnet50, "dataset2", 4, {});
  failed.status = train::RunStatus::failed;
  failed.predictions.clear();
  records.push_back(failed);
  const auto t = report::build_metric_table("dataset2", records);
  EXPECT_EQ(t.rows.size(), 3u);
  EXPECT_FALSE(report::pooled_row(t, Backbone::resnet50));
  const auto text = report::format_metric_table(t, {});
  EXPECT_NE(text.find("# failed resnet50_dataset2_fold4\n"), std::string::npos);
  EXPECT_NE(text.find("# incomplete resnet50"), std::string::npos);
}

TEST(MetricTable, UndefinedMetricsUseTheMarker) {
  std::vector<train::RunRecord> records;
  for (int k = 1; k <= 5; ++k) records.push_back(record_with(Backbone::resnet50, "dataset1", k, {0, 10, 0, 2}));
  const auto text = report::format_metric_table(report::build_metric_table("dataset1", records), {});
  EXPECT_NE(text.find("\tTotal / Average\t0\t50\t0\t10\t83.3\t0.0\t100.0\tundefined\tundefined\n"), std::string::npos);
}

TEST(Plots, FiveModelsOnOneFoldGiveThreeOverlays) {
  const auto dir = fresh_dir("five");
  std::vector<train::RunRecord> records;
  for (auto b : models::kReferenceBackbones) records.push_back(record_with(b, "dataset1", 4, {60, 500, 60, 8}));
  const auto files = report::write_curve_plots(dir, records, {11, "feed"});
  ASSERT_EQ(files.size(), 3u);
  std::set<std::string> names;
  for (const auto& f : files) {
    names.insert(f.png.filename().string());
    const auto img = cv::imread(f.png.string(), cv::IMREAD_COLOR);
    ASSERT_FALSE(img.empty());
    EXPECT_EQ(img.cols, 980);
    const auto meta = report::png_text(f.png);
    EXPECT_EQ(meta.at("seed"), "11");
    EXPECT_EQ(meta.at("config_digest"), "feed");
    EXPECT_EQ(meta.at("tool"), "cxrbench 1.0.0");

    const auto lines = read_lines(f.tsv);
    const auto header = std::find_if(lines.begin(), lines.end(), [](auto& l) { return l.rfind("epoch", 0) == 0; });
    ASSERT_NE(header, lines.end());
    EXPECT_EQ(split(*header, '\t').size(), 6u);  // epoch + 5 curves
    EXPECT_EQ(lines.end() - header - 1, 30);
    EXPECT_NE(std::find(lines.begin(), lines.end(), "# seed 11"), lines.end());
  }
  EXPECT_EQ(names, (std::set<std::string>{"dataset1_fold4_train_accuracy.png", "dataset1_fold4_train_loss.png",
                                          "dataset1_fold4_test_accuracy.png"}));
}

TEST(Plots, CurveDataMatchesEpochLogs) {
  const auto dir = fresh_dir("single");
  const auto rec = record_with(Backbone::inceptionv3, "dataset3", 2, {60, 500, 60, 8}, 4);
  const auto files = report::write_curve_plots(dir, {rec}, {});
  ASSERT_EQ(files.size(), 3u);
  const auto lines = read_lines(dir / "dataset3_fold2_train_loss.tsv");
  EXPECT_EQ(lines[lines.size() - 5], "epoch\tinceptionv3");
  for (int e = 1; e <= 4; ++e) {
    const auto cells = split(lines[lines.size() - 5 + static_cast<std::size_t>(e)], '\t');
    ASSERT_EQ(cells.size(), 2u);
    EXPECT_EQ(cells[0], std::to_string(e));
    EXPECT_NEAR(std::stod(cells[1]), rec.epochs[static_cast<std::size_t>(e - 1)].train_loss, 1e-6);
  }
}

TEST(Plots, FailedRecordsAreNotPlotted) {
  auto rec = record_with(Backbone::resnet50, "dataset1", 1, {1, 1, 1, 1});
  rec.status = train::RunStatus::failed;
  EXPECT_TRUE(report::write_curve_plots(fresh_dir("failed"), {rec}, {}).empty());
}

TEST(Comparison, ThisStudyRowsOnlyForAvailableDatasets) {
  std::vector<train::RunRecord> records;
  for (int k = 1; k <= 5; ++k) {
    records.push_back(record_with(Backbone::resnet50, "dataset2", k, {68, 298, 1, 0}));
    records.push_back(record_with(Backbone::resnet101, "dataset2", k, {60, 290, 9, 8}));
  }
  records.push_back(record_with(Backbone::resnet50, "dataset1", 1, {68, 560, 0, 0}));  // one fold only
  const std::vector<report::MetricTable> tables = {report::build_metric_table("dataset1", records),
                                                   report::build_metric_table("dataset2", records)};
  const auto rows = report::comparison_rows(tables);
  ASSERT_EQ(rows.size(), 11u);
  EXPECT_EQ(rows[0].study, "Das et al.");
  EXPECT_EQ(rows[9].study, "Narin et al.");
  const auto& mine = rows[10];
  EXPECT_EQ(mine.study, "This Study");
  EXPECT_EQ(mine.classes, "2 (COVID-19 / Viral Pneumonia)");
  EXPECT_EQ(mine.methods, "ResNet50, ResNet101");
  EXPECT_EQ(mine.best_model, "ResNet50");
  EXPECT_EQ(mine.accuracy, metrics::format_percent(metrics::ratio(5 * 366, 5 * 367)));
  EXPECT_EQ(mine.reference, "99.5");
  const auto text = report::format_comparison(rows, {3, "x"});
  EXPECT_NE(text.find("Previous Study\tData Type\tMethods / Classifier\tNumber of Classes\tAccuracy (%)"),
            std::string::npos);
  EXPECT_NE(text.find("# seed 3\n"), std::string::npos);
}

TEST(Comparison, PublishedCountsGiveThePublishedThisStudyRows) {
  const auto records = published_records();
  std::vector<report::MetricTable> tables;
  for (const std::string d : {"dataset1", "dataset2", "dataset3"}) tables.push_back(report::build_metric_table(d, records));
  const auto rows = report::comparison_rows(tables);
  ASSERT_EQ(rows.size(), 13u);
  for (std::size_t i = 10; i < 13; ++i) EXPECT_EQ(rows[i].accuracy, rows[i].reference) << rows[i].classes;
}
