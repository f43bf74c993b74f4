#pragma once

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "cxr/core/provenance.hpp"
#include "cxr/core/text_io.hpp"
#include "cxr/report/tables.hpp"
#include "cxr/train/run_record.hpp"

namespace cxr::report {

namespace fs = std::filesystem;

enum class Curve { train_accuracy, train_loss, test_accuracy };
inline constexpr std::array<Curve, 3> kCurves = {Curve::train_accuracy, Curve::train_loss, Curve::test_accuracy};

inline const char* name_of(Curve c) {
  switch (c) {
    case Curve::train_accuracy: return "train_accuracy";
    case Curve::train_loss: return "train_loss";
    case Curve::test_accuracy: return "test_accuracy";
  }
  return "?";
}

inline const char* title_of(Curve c) {
  switch (c) {
    case Curve::train_accuracy: return "Training accuracy";
    case Curve::train_loss: return "Training loss";
    case Curve::test_accuracy: return "Testing accuracy";
  }
  return "?";
}

inline double curve_value(const train::EpochLog& e, Curve c) {
  switch (c) {
    case Curve::train_accuracy: return e.train_accuracy;
    case Curve::train_loss: return e.train_loss;
    case Curve::test_accuracy: return e.test_accuracy;
  }
  return 0.0;
}

struct Series {
  std::string label;
  cv::Scalar color;
  std::vector<double> values;  // values[i] belongs to epoch i + 1
};

/// Colour of a backbone, stable across every plot.
inline cv::Scalar series_color(models::Backbone b) {
  static const std::array<cv::Scalar, 6> palette = {
      cv::Scalar(180, 119, 31), cv::Scalar(14, 127, 255), cv::Scalar(44, 160, 44),
      cv::Scalar(40, 39, 214),  cv::Scalar(189, 103, 148), cv::Scalar(75, 86, 140)};
  return palette[static_cast<std::size_t>(backbone_rank(b)) % palette.size()];
}

/// Tick spacing of 1, 2 or 5 times a power of ten giving roughly `target` ticks.
inline double nice_step(double span, int target = 6) {
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0})
    if (raw <= m * mag) return m * mag;
  return 10.0 * mag;
}

inline std::string tick_label(double v, double step) {
  char buf[32];
  const int decimals = std::max(0, static_cast<int>(-std::floor(std::log10(step) + 1e-9)));
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

/// Line chart with epoch on the x axis, one polyline per series and a legend.
inline cv::Mat render_plot(const std::string& title, const std::string& y_label, const std::vector<Series>& series,
                           const std::string& footer) {
  const int width = 980, height = 620, left = 115, right = 230, top = 60, bottom = 90;
  cv::Mat img(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
  const auto font = cv::FONT_HERSHEY_SIMPLEX;
  const cv::Scalar ink(40, 40, 40), grid(225, 225, 225);

  int epochs = 1;
  double lo = HUGE_VAL, hi = -HUGE_VAL;
  for (const auto& s : series) {
    epochs = std::max(epochs, static_cast<int>(s.values.size()));
    for (double v : s.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!(lo <= hi)) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-9) lo -= 0.5, hi += 0.5;
  const double ystep = nice_step(hi - lo);
  lo = std::floor(lo / ystep) * ystep;
  hi = std::ceil(hi / ystep) * ystep;
  const double xstep = epochs <= 10 ? 1.0 : nice_step(epochs, 6);

  const int pw = width - left - right, ph = height - top - bottom;
  auto px = [&](double epoch) { return left + static_cast<int>(std::lround((epoch - 1) / std::max(1, epochs - 1) * pw)); };
  auto py = [&](double v) { return top + ph - static_cast<int>(std::lround((v - lo) / (hi - lo) * ph)); };

  for (double y = lo; y <= hi + ystep * 1e-6; y += ystep) {
    cv::line(img, {left, py(y)}, {left + pw, py(y)}, grid, 1);
    const auto text = tick_label(y, ystep);
    int base = 0;
    const auto sz = cv::getTextSize(text, font, 0.45, 1, &base);
    cv::putText(img, text, {left - 8 - sz.width, py(y) + sz.height / 2}, font, 0.45, ink, 1, cv::LINE_AA);
  }
  for (double x = 1; x <= epochs + 1e-9; x += xstep) {
    cv::line(img, {px(x), top}, {px(x), top + ph}, grid, 1);
    const auto text = tick_label(x, 1.0);
    int base = 0;
    const auto sz = cv::getTextSize(text, font, 0.45, 1, &base);
    cv::putText(img, text, {px(x) - sz.width / 2, top + ph + 20}, font, 0.45, ink, 1, cv::LINE_AA);
  }
  cv::rectangle(img, {left, top}, {left + pw, top + ph}, ink, 1);
  cv::putText(img, title, {left, top - 22}, font, 0.7, ink, 2, cv::LINE_AA);
  cv::putText(img, "Epoch", {left + pw / 2 - 25, top + ph + 45}, font, 0.55, ink, 1, cv::LINE_AA);
  cv::Mat ylab(30, 200, CV_8UC3, cv::Scalar(255, 255, 255));
  cv::putText(ylab, y_label, {4, 22}, font, 0.55, ink, 1, cv::LINE_AA);
  cv::rotate(ylab, ylab, cv::ROTATE_90_COUNTERCLOCKWISE);
  ylab.copyTo(img(cv::Rect(10, top + ph / 2 - 100, ylab.cols, ylab.rows)));

  int ly = top + 10;
  for (const auto& s : series) {
    std::vector<cv::Point> pts;
    for (std::size_t i = 0; i < s.values.size(); ++i) pts.emplace_back(px(static_cast<double>(i + 1)), py(s.values[i]));
    if (pts.size() > 1) cv::polylines(img, pts, false, s.color, 2, cv::LINE_AA);
    for (const auto& p : pts) cv::circle(img, p, 3, s.color, cv::FILLED, cv::LINE_AA);
    cv::line(img, {left + pw + 20, ly}, {left + pw + 50, ly}, s.color, 3, cv::LINE_AA);
    cv::putText(img, s.label, {left + pw + 58, ly + 5}, font, 0.5, ink, 1, cv::LINE_AA);
    ly += 24;
  }
  cv::putText(img, footer, {10, height - 12}, font, 0.4, cv::Scalar(120, 120, 120), 1, cv::LINE_AA);
  return img;
}

/// PNG bytes with tEXt chunks inserted after IHDR.
inline std::vector<unsigned char> encode_png(const cv::Mat& img, const std::vector<std::pair<std::string, std::string>>& text) {
  std::vector<unsigned char> png;
  if (!cv::imencode(".png", img, png)) throw Error("PNG encoding failed");
  std::vector<unsigned char> chunks;
  auto put32 = [&](std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) chunks.push_back(static_cast<unsigned char>(v >> s));
  };
  for (const auto& [key, value] : text) {
    std::string body = "tEXt" + key + '\0' + value;
    put32(static_cast<std::uint32_t>(body.size() - 4));
    chunks.insert(chunks.end(), body.begin(), body.end());
    put32(static_cast<std::uint32_t>(crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
  }
  constexpr std::size_t after_ihdr = 8 + 4 + 4 + 13 + 4;
  png.insert(png.begin() + static_cast<std::ptrdiff_t>(after_ihdr), chunks.begin(), chunks.end());
  return png;
}

/// Key/value pairs of the tEXt chunks in a PNG file.
inline std::map<std::string, std::string> png_text(const fs::path& path) {
  const auto bytes = read_text(path);
  std::map<std::string, std::string> out;
  for (std::size_t at = 8; at + 12 <= bytes.size();) {
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len = (len << 8) | static_cast<unsigned char>(bytes[at + static_cast<std::size_t>(i)]);
    const auto type = bytes.substr(at + 4, 4);
    if (type == "tEXt") {
      const auto body = bytes.substr(at + 8, len);
      const auto nul = body.find('\0');
      out[body.substr(0, nul)] = body.substr(nul + 1);
    }
    at += 12 + len;
  }
  return out;
}

struct PlotFiles {
  fs::path png, tsv;
};

inline std::string plot_stem(const std::string& dataset, int fold, Curve c) {
  return dataset + "_fold" + std::to_string(fold) + "_" + name_of(c);
}

/// For every (dataset, fold) with completed records: one overlay plot per
/// curve kind, with its data as TSV beside it.
inline std::vector<PlotFiles> write_curve_plots(const fs::path& dir, const std::vector<train::RunRecord>& records,
                                                const Provenance& prov) {
  std::map<std::pair<std::string, int>, std::vector<const train::RunRecord*>> groups;
  for (const auto& r : records)
    if (r.status == train::RunStatus::completed) groups[{r.dataset, r.fold}].push_back(&r);
  fs::create_directories(dir);
  std::vector<PlotFiles> written;
  for (auto& [key, group] : groups) {
    std::sort(group.begin(), group.end(), [](auto* a, auto* b) {
      return backbone_rank(a->model.backbone) < backbone_rank(b->model.backbone);
    });
    const auto& [dataset, fold] = key;
    for (auto c : kCurves) {
      std::vector<Series> series;
      std::size_t epochs = 0;
      for (const auto* r : group) {
        Series s{std::string(models::display_name(r->model.backbone)), series_color(r->model.backbone), {}};
        for (const auto& e : r->epochs) s.values.push_back(curve_value(e, c));
        epochs = std::max(epochs, s.values.size());
        series.push_back(std::move(s));
      }
      const auto stem = plot_stem(dataset, fold, c);
      std::string tsv = "# cxrbench curve v1\n" + prov.header();
      tsv += "# dataset " + dataset + "\n# fold " + std::to_string(fold) + "\n# curve " + name_of(c) + "\nepoch";
      for (const auto* r : group) tsv += "\t" + std::string(models::name_of(r->model.backbone));
      tsv += "\n";
      for (std::size_t i = 0; i < epochs; ++i) {
        tsv += std::to_string(i + 1);
        for (const auto& s : series) {
          char buf[32] = "";
          if (i < s.values.size()) std::snprintf(buf, sizeof buf, "%.6f", s.values[i]);
          tsv += "\t" + std::string(buf);
        }
        tsv += "\n";
      }
      const std::string title = std::string(title_of(c)) + ", " + dataset + " fold " + std::to_string(fold);
      const std::string footer = std::string(kToolName) + " " + kToolVersion + "  seed " + std::to_string(prov.seed) +
                                 "  config " + prov.config_digest;
      const auto img = render_plot(title, c == Curve::train_loss ? "Loss" : "Accuracy", series, footer);
      const auto png = encode_png(img, {{"tool", std::string(kToolName) + " " + kToolVersion},
                                        {"seed", std::to_string(prov.seed)},
                                        {"config_digest", prov.config_digest},
                                        {"curve", stem}});
      PlotFiles f{dir / (stem + ".png"), dir / (stem + ".tsv")};
      write_atomic(f.png, std::string_view(reinterpret_cast<const char*>(png.data()), png.size()));
      write_atomic(f.tsv, tsv);
      written.push_back(f);
    }
  }
  return written;
}

}  // namespace cxr::report
