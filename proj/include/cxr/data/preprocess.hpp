#pragma once

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cstring>
#include <filesystem>
#include <string>

#include "cxr/core/error.hpp"
#include "cxr/data/records.hpp"
#include "cxr/models/config.hpp"
#include "cxr/nn/tensor.hpp"

namespace cxr::data {

/// Decode, scale to [0, 1] (8-bit / 255, 16-bit / 65535), bilinear-resize to
/// side x side and expand to RGB. Returns CV_32FC3 in RGB channel order.
inline cv::Mat load_unit_rgb(const std::filesystem::path& path, int side, const std::string& id) {
  cv::Mat raw;
  try {
    raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception& e) {
    throw DataError("cannot decode image for record " + id + " (" + path.string() + "): " + e.what());
  }
  if (raw.empty()) throw DataError("cannot decode image for record " + id + " (" + path.string() + ")");
  double scale = 0.0;
  if (raw.depth() == CV_8U) scale = 1.0 / 255.0;
  else if (raw.depth() == CV_16U) scale = 1.0 / 65535.0;
  else throw DataError("unsupported bit depth for record " + id);

  cv::Mat colour;
  switch (raw.channels()) {
    case 1: colour = raw; break;
    case 2: cv::extractChannel(raw, colour, 0); break;
    case 3: cv::cvtColor(raw, colour, cv::COLOR_BGR2RGB); break;
    case 4: cv::cvtColor(raw, colour, cv::COLOR_BGRA2RGB); break;
    default: throw DataError("unsupported channel count for record " + id);
  }
  cv::Mat unit;
  colour.convertTo(unit, CV_32F, scale);
  cv::Mat sized;
  if (unit.rows == side && unit.cols == side) sized = unit;
  else cv::resize(unit, sized, cv::Size(side, side), 0, 0, cv::INTER_LINEAR);
  if (sized.channels() == 1) cv::cvtColor(sized, sized, cv::COLOR_GRAY2RGB);
  return sized;
}

/// [side, side, 3] tensor: pixels in [0, 1] standardised per channel.
inline nn::Tensor<float> preprocess_image(const ImageRecord& record, int side,
                                          const models::Normalization& norm = {}) {
  if (side <= 0) throw UsageError("target side must be positive");
  const cv::Mat rgb = load_unit_rgb(record.path, side, record.id);
  nn::Tensor<float> out({side, side, 3});
  for (int y = 0; y < side; ++y) {
    const auto* row = rgb.ptr<cv::Vec3f>(y);
    for (int x = 0; x < side; ++x)
      for (int c = 0; c < 3; ++c) {
        out[(static_cast<std::size_t>(y) * side + x) * 3 + c] = (row[x][c] - norm.mean[c]) / norm.stddev[c];
      }
  }
  return out;
}

/// HWC image -> CHW, the layout the network consumes.
inline nn::Tensor<float> to_chw(const nn::Tensor<float>& hwc) {
  const int h = hwc.dim(0), w = hwc.dim(1), c = hwc.dim(2);
  nn::Tensor<float> out({c, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) {
        out[(static_cast<std::size_t>(k) * h + y) * w + x] = hwc[(static_cast<std::size_t>(y) * w + x) * c + k];
      }
  return out;
}

}  // namespace cxr::data
