#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cxr/core/error.hpp"

namespace cxr::models {

enum class Backbone { resnet50, resnet101, resnet152, inceptionv3, inception_resnetv2, tiny_cnn };

inline constexpr std::array<Backbone, 5> kReferenceBackbones = {
    Backbone::inceptionv3, Backbone::resnet50, Backbone::resnet101, Backbone::resnet152,
    Backbone::inception_resnetv2};

inline std::string_view name_of(Backbone b) {
  switch (b) {
    case Backbone::resnet50: return "resnet50";
    case Backbone::resnet101: return "resnet101";
    case Backbone::resnet152: return "resnet152";
    case Backbone::inceptionv3: return "inceptionv3";
    case Backbone::inception_resnetv2: return "inception_resnetv2";
    case Backbone::tiny_cnn: return "tiny_cnn";
  }
  return "?";
}

/// Display name used in result tables.
inline std::string_view display_name(Backbone b) {
  switch (b) {
    case Backbone::resnet50: return "ResNet50";
    case Backbone::resnet101: return "ResNet101";
    case Backbone::resnet152: return "ResNet152";
    case Backbone::inceptionv3: return "InceptionV3";
    case Backbone::inception_resnetv2: return "Inception-ResNetV2";
    case Backbone::tiny_cnn: return "TinyCNN";
  }
  return "?";
}

inline Backbone parse_backbone(std::string_view s) {
  for (auto b : {Backbone::resnet50, Backbone::resnet101, Backbone::resnet152,
                 Backbone::inceptionv3, Backbone::inception_resnetv2, Backbone::tiny_cnn}) {
    if (s == name_of(b)) return b;
  }
  throw UsageError("unknown backbone '" + std::string(s) + "'");
}

/// Input side length in pixels; fixed per backbone.
inline int input_side(Backbone b) {
  return (b == Backbone::inceptionv3 || b == Backbone::inception_resnetv2) ? 299 : 224;
}

/// Width of the pooled feature vector the classification head receives.
inline int feature_width(Backbone b) {
  switch (b) {
    case Backbone::inceptionv3: return 2048;
    case Backbone::inception_resnetv2: return 1536;
    case Backbone::tiny_cnn: return 16;
    default: return 2048;
  }
}

/// Per-channel standardisation applied after scaling pixels to [0, 1]:
/// value = (pixel - mean) / std.
struct Normalization {
  std::array<float, 3> mean{0.f, 0.f, 0.f};
  std::array<float, 3> stddev{1.f, 1.f, 1.f};
};

/// ResNets follow the ImageNet mean/std convention, the Inception family maps
/// to [-1, 1], and the from-scratch CNN keeps plain [0, 1] pixels.
inline Normalization normalization_for(Backbone b) {
  switch (b) {
    case Backbone::inceptionv3:
    case Backbone::inception_resnetv2:
      return {{0.5f, 0.5f, 0.5f}, {0.5f, 0.5f, 0.5f}};
    case Backbone::tiny_cnn:
      return {};
    default:
      return {{0.485f, 0.456f, 0.406f}, {0.229f, 0.224f, 0.225f}};
  }
}

struct ModelConfig {
  Backbone backbone = Backbone::tiny_cnn;
  int num_classes = 2;
  double dropout_rate = 0.5;
  bool pretrained = false;
  std::uint64_t seed = 2020;

  static ModelConfig for_backbone(Backbone b) {
    ModelConfig c;
    c.backbone = b;
    c.pretrained = b != Backbone::tiny_cnn;
    return c;
  }

  int input_side() const { return models::input_side(backbone); }
};

}  // namespace cxr::models
