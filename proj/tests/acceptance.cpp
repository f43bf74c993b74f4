// One line per acceptance criterion; exit status is nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cxr/app/commands.hpp"
#include "cxr/models/backbones.hpp"
#include "cxr/nn/layers.hpp"
#include "cxr/nn/ops.hpp"
#include "cxr/nn/optim.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace cxr;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void criterion(const char* name, const std::function<Outcome()>& check) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%s  %s  (%.1fs)  %s\n", o.pass ? "PASS" : "FAIL", name, secs, o.detail.c_str());
  std::fflush(stdout);
  failures += !o.pass;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const metrics::FixtureRow* find_row(const std::vector<metrics::FixtureRow>& rows, const std::string& model,
                                    const std::string& dataset, int fold) {
  for (const auto& r : rows)
    if (r.model == model && r.dataset == dataset && r.fold == fold) return &r;
  return nullptr;
}

Outcome metric_oracle() {
  const auto rows = metrics::load_fixtures(CXR_DEFAULT_FIXTURES);
  const auto found = metrics::validate_against_reference(rows, 0.1);
  std::string pooled;
  bool headline = true;
  const std::pair<const char*, const char*> expect[] = {{"dataset1", "96.1"}, {"dataset2", "99.5"}, {"dataset3", "99.7"}};
  for (const auto& [d, want] : expect) {
    const auto* r = find_row(rows, "resnet50", d, metrics::kPooledFold);
    const auto got = r ? metrics::format_percent(metrics::metrics_from_confusion(r->counts).accuracy) : "missing";
    headline = headline && got == want;
    pooled += std::string(pooled.empty() ? "" : " / ") + got;
  }
  return {rows.size() == 90 && found.empty() && headline,
          fmt("%zu rows, %zu discrepancies beyond 0.1 pp; ResNet50 pooled ACC %s", rows.size(), found.size(),
              pooled.c_str())};
}

Outcome micro_pooling() {
  const auto rows = metrics::load_fixtures(CXR_DEFAULT_FIXTURES);
  const auto found = metrics::check_pooling(rows, 0.1);
  std::vector<metrics::ConfusionCounts> folds;
  for (int k = 1; k <= 5; ++k) folds.push_back(find_row(rows, "resnet50", "dataset3", k)->counts);
  const auto [sum, m] = metrics::pool_folds(folds);
  const bool example = sum == metrics::ConfusionCounts{337, 2766, 6, 4} && metrics::format_percent(m.accuracy) == "99.7";
  int pooled = 0;
  for (const auto& r : rows) pooled += r.fold == metrics::kPooledFold;
  return {found.empty() && example && pooled == 15,
          fmt("%d pooled rows, %zu mismatches; ResNet50 dataset3 sum (%lld, %lld, %lld, %lld) -> %s", pooled,
              found.size(), static_cast<long long>(sum.tp), static_cast<long long>(sum.tn),
              static_cast<long long>(sum.fp), static_cast<long long>(sum.fn), metrics::format_percent(m.accuracy).c_str())};
}

data::BinaryDataset sized_dataset(int n, int label) {
  data::BinaryDataset ds;
  ds.name = "profile";
  for (int i = 0; i < n; ++i) {
    data::ImageRecord r;
    r.id = fmt("src:%07d.png", i);
    ds.records.push_back(r);
    ds.labels.push_back(label);
  }
  return ds;
}

Outcome fold_profile() {
  // each class is dealt independently, so one class per dataset is enough
  const std::pair<int, std::vector<int>> cases[] = {{341, {68, 68, 68, 68, 69}},
                                                     {2800, {560, 560, 560, 560, 560}},
                                                     {1493, {298, 298, 299, 299, 299}},
                                                     {2772, {554, 554, 554, 555, 555}}};
  bool ok = true;
  std::string detail;
  for (const auto& [n, want] : cases) {
    auto ds = sized_dataset(n, 1);
    auto neg = sized_dataset(1, 0);
    neg.records[0].id = "neg:0";
    ds.records.push_back(neg.records[0]);
    ds.labels.push_back(0);
    const auto a = folds::assign_folds(ds, 2020);
    std::vector<int> got(5, 0);
    for (std::size_t i = 0; i + 1 < ds.size(); ++i) ++got[static_cast<std::size_t>(a.fold_of.at(ds.records[i].id) - 1)];
    ok = ok && got == want;
    detail += fmt("%s%d->(%d,%d,%d,%d,%d)", detail.empty() ? "" : " ", n, got[0], got[1], got[2], got[3], got[4]);
  }
  return {ok, detail};
}

Outcome layer_math() {
  double conv_err = 0, pool_err = 0, gap_err = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto x = oracle::random_tensor({2, 3, 9, 8}, seed);
    const auto w = oracle::random_tensor({4, 3, 3, 3}, seed + 100);
    const nn::Tensor<double> b({4}, std::vector<double>{0.1, -0.2, 0.3, 0.0});
    const auto y = nn::conv2d(x, w, b, nn::Window::square(3, 2, 1));
    const auto ref = oracle::conv_nested(x, w, {0.1, -0.2, 0.3, 0.0}, 2, 2, 1, 1);
    for (std::size_t i = 0; i < y.size(); ++i) conv_err = std::max(conv_err, std::abs(y[i] - ref[i]));
    const auto p = nn::max_pool(x, 2, 2);
    const auto pref = oracle::max_pool_nested(x, 2, 2);
    for (std::size_t i = 0; i < p.size(); ++i) pool_err = std::max(pool_err, std::abs(p[i] - pref[i]));
    const auto chw = oracle::random_tensor({5, 7, 3}, seed + 200);
    const auto g = nn::global_avg_pool(chw);
    const auto gref = oracle::channel_means(chw);
    for (std::size_t i = 0; i < gref.size(); ++i) gap_err = std::max(gap_err, std::abs(g[i] - gref[i]));
  }

  double sum_err = 0, shift_err = 0;
  Rng rng(77);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> s(2 + rng.below(6));
    for (auto& v : s) v = rng.uniform(-30.0, 30.0);
    auto shifted = s;
    const double c = rng.uniform(-100.0, 100.0);
    for (auto& v : shifted) v += c;
    const auto p = nn::softmax<double>(s), q = nn::softmax<double>(shifted);
    double total = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      total += p[i];
      shift_err = std::max(shift_err, std::abs(p[i] - q[i]));
    }
    sum_err = std::max(sum_err, std::abs(total - 1.0));
  }

  // tiny_cnn layers with the classification head, on small random images
  Rng init(50);
  nn::Sequential<double> net;
  net.add("", models::make_backbone<double>(models::Backbone::tiny_cnn, init));
  net.emplace<nn::GlobalAvgPool<double>>("");
  net.emplace<nn::Dense<double>>("fc", models::feature_width(models::Backbone::tiny_cnn), 2, init);
  const auto batch = oracle::random_tensor({3, 3, 12, 12}, 51, 0.0, 1.0);
  const std::vector<int> targets{0, 1, 1};
  auto loss = [&] { return nn::softmax_cross_entropy(net.forward(batch, nn::Mode::train), std::span<const int>(targets)).loss; };
  std::vector<nn::ParamRef<double>> params;
  net.collect("", params);
  for (auto& p : params) p.grad->fill(0.0);
  net.backward(nn::softmax_cross_entropy(net.forward(batch, nn::Mode::train), std::span<const int>(targets)).grad);
  double grad_err = 0;
  std::size_t checked = 0;
  for (auto& p : params)
    for (std::size_t i = 0; i < p.value->size(); ++i, ++checked)
      grad_err = std::max(grad_err, oracle::relative_error((*p.grad)[i], oracle::central_difference(*p.value, i, loss), 1e-7));

  const bool ok = conv_err <= 1e-12 && pool_err <= 1e-12 && gap_err <= 1e-12 && grad_err < 1e-4 && sum_err <= 1e-6 &&
                  shift_err <= 1e-9;
  return {ok, fmt("conv %.1e, max-pool %.1e, gap %.1e (<= 1e-12); tiny_cnn FD rel err %.1e over %zu params (< 1e-4); "
                  "softmax sum %.1e (<= 1e-6), shift %.1e (<= 1e-9)",
                  conv_err, pool_err, gap_err, grad_err, checked, sum_err, shift_err)};
}

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("cxr_acceptance_" + name);
  fs::remove_all(d);
  return d;
}

app::Settings synthetic_settings(const fs::path& dir) {
  app::Settings s;
  data::write_synthetic_sources(dir / "sources", {.per_class = 20, .side = 32, .seed = 2020});
  s.covid_repo = dir / "sources/covid_repo";
  s.chestxray8 = dir / "sources/chestxray8";
  s.kaggle_pneumonia = dir / "sources/kaggle_pneumonia";
  return s;
}

Outcome training_smoke() {
  const auto dir = scratch("smoke");
  auto s = synthetic_settings(dir);
  s.out = dir / "w";
  s.datasets = {"dataset1"};
  s.backbones = {"tiny_cnn"};
  s.learning_rate = 1e-3;  // the reference 1e-5 is tuned for pretrained backbones
  s = app::resolve(s);
  const auto quiet = [](const std::string&) {};
  if (app::cmd_run(s, quiet) != 0) return {false, "run failed"};

  bool ok = true;
  std::string accs;
  const app::Workspace ws{s.out};
  const auto m = data::read_manifest(ws.manifest());
  const auto ds = data::read_dataset(ws.dataset("dataset1"), m);
  const auto a = folds::read_folds(ws.folds("dataset1"));
  for (int k = 1; k <= 5; ++k) {
    const auto path = ws.runs() / train::run_file_name(models::Backbone::tiny_cnn, "dataset1", k);
    const auto rec = train::read_run_record(path);
    const auto split = folds::fold_split(ds, a, k);
    train::assert_disjoint(split.train, split.test);
    train::assert_predictions_cover(rec.predictions, split.test);
    const double acc = rec.epochs.size() == 30 ? rec.epochs.back().train_accuracy : 0.0;
    ok = ok && acc >= 0.95 && rec.status == train::RunStatus::completed && rec.train_size == static_cast<int>(split.train.size());
    const auto echo = nlohmann::json::parse(read_text(path)).at("overrides");
    ok = ok && echo.size() == 1 && echo[0] == "learning_rate=0.001 (default 1e-05)";
    accs += fmt("%s%.3f", accs.empty() ? "" : " ", acc);
  }
  return {ok, fmt("tiny_cnn, 5 folds x 30 epochs, batch 3, lr 1e-3 (recorded override); final train acc %s (>= 0.95); "
                  "leakage guard passed on every fold",
                  accs.c_str())};
}

Outcome determinism() {
  const auto dir = scratch("determinism");
  auto base = synthetic_settings(dir);
  const auto quiet = [](const std::string&) {};
  for (const char* w : {"a", "b"}) {
    auto s = base;
    s.out = dir / w;
    s = app::resolve(s);
    app::cmd_ingest(s, quiet);
    app::cmd_split(s, quiet);
  }
  bool same = read_text(dir / "a/manifest.tsv") == read_text(dir / "b/manifest.tsv");
  int files = 1;
  for (const char* d : {"dataset1", "dataset2", "dataset3"}) {
    const auto f = std::string("folds/") + d + ".folds";
    same = same && read_text(dir / "a" / f) == read_text(dir / "b" / f);
    ++files;
  }
  return {same, fmt("%d artifacts compared (manifest + fold files) across two output directories: %s", files,
                    same ? "byte-identical" : "DIFFER")};
}

/// Optional: pooled ResNet50 accuracy of a full run against the reference values.
void extended_run() {
  const char* dir = std::getenv("CXR_EXTENDED_RUNS");
  if (!dir || !*dir) {
    std::printf("INFO  extended full-data run  not evaluated: needs the public datasets and many CPU-days; "
                "set CXR_EXTENDED_RUNS=<out>/runs after a full `cxrbench run` to check ResNet50 pooled accuracy "
                "within 3 pp of 96.1 / 99.5 / 99.7\n");
    return;
  }
  criterion("extended full-data run (ResNet50 pooled ACC within 3 pp)", [&]() -> Outcome {
    const auto records = train::read_run_records(dir);
    const std::pair<const char*, double> ref[] = {{"dataset1", 96.1}, {"dataset2", 99.5}, {"dataset3", 99.7}};
    bool ok = true;
    std::string detail;
    for (const auto& [d, want] : ref) {
      const auto row = report::pooled_row(report::build_metric_table(d, records), models::Backbone::resnet50);
      if (!row) return {false, std::string("no complete ResNet50 runs for ") + d};
      const double got = row->metrics.accuracy->percent();
      ok = ok && std::abs(got - want) <= 3.0;
      detail += fmt("%s%s %.1f (ref %.1f)", detail.empty() ? "" : "; ", d, got, want);
    }
    return {ok, detail};
  });
}

}  // namespace

int main() {
  criterion("metric oracle", metric_oracle);
  criterion("micro-pooling reproduction", micro_pooling);
  criterion("fold-profile reproduction", fold_profile);
  criterion("layer-math property suite", layer_math);
  criterion("training smoke test", training_smoke);
  extended_run();
  criterion("end-to-end determinism", determinism);
  std::printf("%s\n", failures == 0 ? "all acceptance criteria passed" : fmt("%d criteria failed", failures).c_str());
  return failures == 0 ? 0 : 1;
}
