#pragma once

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>

#include "cxr/core/random.hpp"
#include "cxr/core/text_io.hpp"

namespace cxr::data {

struct SyntheticOptions {
  int per_class = 20;  // images per class: covid19, normal, bacterial, viral
  int side = 64;
  std::uint64_t seed = 2020;
};

/// Gaussian noise around a class-dependent brightness: positives are bright,
/// every negative class is dark, so the two classes separate on mean intensity.
inline cv::Mat synthetic_image(bool positive, int side, Rng& rng) {
  const double mean = positive ? 0.68 : 0.32;
  cv::Mat img(side, side, CV_8UC1);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const double v = std::clamp(mean + 0.12 * rng.normal(), 0.0, 1.0);
      img.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  return img;
}

namespace detail {

inline void write_png(const std::filesystem::path& path, const cv::Mat& img) {
  std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), img)) throw Error("cannot write " + path.string());
}

inline std::string numbered(const char* fmt, int i) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, i);
  return buf;
}

}  // namespace detail

/// Write three source trees under `dir` laid out like the public sources:
///   covid_repo/      images/ + metadata.csv (one CT row, one stray text file)
///   chestxray8/      images/ + Data_Entry_2017.csv (one non-normal finding)
///   kaggle_pneumonia/chest_xray/train/{PNEUMONIA,NORMAL}/
inline void write_synthetic_sources(const std::filesystem::path& dir, const SyntheticOptions& opt) {
  namespace fs = std::filesystem;
  Rng rng(Rng::derive(opt.seed, 0x5717));
  const int n = opt.per_class;

  const auto covid = dir / "covid_repo";
  std::ostringstream meta;
  meta << "patientid,offset,sex,age,finding,view,modality,folder,filename\n";
  for (int i = 1; i <= n; ++i) {
    const auto name = detail::numbered("covid_%03d.png", i);
    detail::write_png(covid / "images" / name, synthetic_image(true, opt.side, rng));
    meta << i << ",0,M,50,\"Pneumonia/Viral/COVID-19\",PA,X-ray,images," << name << "\n";
  }
  detail::write_png(covid / "images" / "ct_001.png", synthetic_image(true, opt.side, rng));
  meta << n + 1 << ",0,F,60,\"Pneumonia/Viral/COVID-19\",Axial,CT,images,ct_001.png\n";
  write_atomic(covid / "metadata.csv", meta.str());
  write_atomic(covid / "README.txt", "synthetic stand-in for the COVID-19 image repository\n");

  const auto cxr8 = dir / "chestxray8";
  std::ostringstream entries;
  entries << "Image Index,Finding Labels,Follow-up #,Patient ID,Patient Age,Patient Gender,View Position\n";
  for (int i = 1; i <= n; ++i) {
    const auto name = detail::numbered("%08d_000.png", i);
    detail::write_png(cxr8 / "images" / name, synthetic_image(false, opt.side, rng));
    entries << name << ",No Finding,0," << i << ",40,M,PA\n";
  }
  const auto effusion = detail::numbered("%08d_000.png", n + 1);
  detail::write_png(cxr8 / "images" / effusion, synthetic_image(false, opt.side, rng));
  entries << effusion << ",Effusion,0," << n + 1 << ",70,F,PA\n";
  write_atomic(cxr8 / "Data_Entry_2017.csv", entries.str());

  const auto kaggle = dir / "kaggle_pneumonia" / "chest_xray" / "train";
  for (int i = 1; i <= n; ++i) {
    detail::write_png(kaggle / "PNEUMONIA" / detail::numbered("person%d_bacteria_1.png", i),
                      synthetic_image(false, opt.side, rng));
    detail::write_png(kaggle / "PNEUMONIA" / detail::numbered("person%d_virus_2.png", 1000 + i),
                      synthetic_image(false, opt.side, rng));
  }
  detail::write_png(kaggle / "NORMAL" / "IM-0001-0001.png", synthetic_image(false, opt.side, rng));
}

}  // namespace cxr::data
