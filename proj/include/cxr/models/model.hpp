#pragma once

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "cxr/core/random.hpp"
#include "cxr/core/text_io.hpp"
#include "cxr/models/backbones.hpp"
#include "cxr/models/config.hpp"
#include "cxr/nn/layers.hpp"
#include "cxr/nn/ops.hpp"
#include "cxr/nn/weights_io.hpp"

namespace cxr::models {

/// Backbone plus classification head:
/// global average pooling -> dropout -> dense(num_classes) -> softmax.
///
/// Backbone parameters keep their library names; head parameters live under
/// "head.". Class index 1 is the positive class.
template <typename T>
class Model {
 public:
  Model(ModelConfig config, std::unique_ptr<nn::Sequential<T>> backbone, Rng& rng)
      : config_(config), backbone_(std::move(backbone)) {
    head_.template emplace<nn::GlobalAvgPool<T>>("");
    head_.template emplace<nn::Dropout<T>>("", config.dropout_rate, Rng::derive(config.seed, 7));
    head_.template emplace<nn::Dense<T>>("fc", feature_width(config.backbone), config.num_classes, rng);
  }

  const ModelConfig& config() const { return config_; }
  int input_side() const { return config_.input_side(); }

  /// Raw class scores [N, num_classes] for an NCHW batch of 3-channel images.
  nn::Tensor<T> logits(const nn::Tensor<T>& batch, nn::Mode mode) {
    check_input(batch);
    return head_.forward(backbone_->forward(batch, mode), mode);
  }

  /// Class probabilities in inference mode.
  nn::Tensor<T> probabilities(const nn::Tensor<T>& batch) {
    return nn::softmax_rows(logits(batch, nn::Mode::eval));
  }

  /// Backpropagate d(loss)/d(logits) from the last train-mode forward pass.
  nn::Tensor<T> backward(const nn::Tensor<T>& grad_logits) {
    return backbone_->backward(head_.backward(grad_logits));
  }

  std::vector<nn::ParamRef<T>> parameters() {
    std::vector<nn::ParamRef<T>> out;
    backbone_->collect("", out);
    head_.collect("head", out);
    return out;
  }

  void zero_grad() {
    for (auto& p : parameters())
      if (p.trainable()) p.grad->fill(T{0});
  }

 private:
  void check_input(const nn::Tensor<T>& batch) const {
    const int side = input_side();
    if (batch.rank() != 4 || batch.dim(1) != 3 || batch.dim(2) != side || batch.dim(3) != side) {
      throw ShapeError(std::string(name_of(config_.backbone)) + " expects input [N, 3, " +
                       std::to_string(side) + ", " + std::to_string(side) + "], got " +
                       nn::to_string(batch.shape()));
    }
  }

  ModelConfig config_;
  std::unique_ptr<nn::Sequential<T>> backbone_;
  nn::Sequential<T> head_;
};

inline std::filesystem::path pretrained_weights_path(const std::filesystem::path& weights_dir,
                                                     Backbone b) {
  return weights_dir / (std::string(name_of(b)) + ".cxrw");
}

/// Build a model. With `config.pretrained`, backbone weights are read from
/// `<weights_dir>/<backbone>.cxrw`; the head is always freshly initialised
/// from `config.seed`.
template <typename T>
Model<T> build_model(const ModelConfig& config, const std::filesystem::path& weights_dir = {}) {
  if (config.num_classes < 2) throw UsageError("num_classes must be >= 2");
  Rng rng(config.seed);
  Model<T> model(config, make_backbone<T>(config.backbone, rng), rng);
  if (config.pretrained) {
    if (config.backbone == Backbone::tiny_cnn) {
      throw UsageError("tiny_cnn has no pretrained weights; set pretrained = false");
    }
    const auto path = pretrained_weights_path(weights_dir, config.backbone);
    if (weights_dir.empty() || !std::filesystem::exists(path)) {
      throw MissingInputError(
          "pretrained weights for " + std::string(name_of(config.backbone)) + " not found at " +
          path.string() + "\n  export them with:  python3 tools/export_weights.py --backbone " +
          std::string(name_of(config.backbone)) + " --out <weights_dir>\n" +
          "  then pass --weights-dir <weights_dir> (or set CXR_WEIGHTS_DIR)");
    }
    nn::assign(model.parameters(), nn::read_tensors(path), {"head."});
  }
  return model;
}

// Checkpoint: "CXRCKPT1" u64 metadata_len, metadata JSON, then a CXRW block.
inline constexpr char kCheckpointMagic[8] = {'C', 'X', 'R', 'C', 'K', 'P', 'T', '1'};

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"backbone", name_of(c.backbone)},   {"input_side", c.input_side()},
          {"num_classes", c.num_classes},      {"dropout_rate", c.dropout_rate},
          {"pretrained", c.pretrained},        {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.backbone = parse_backbone(j.at("backbone").get<std::string>());
  c.num_classes = j.at("num_classes").get<int>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.pretrained = j.at("pretrained").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline std::string checkpoint_stem(Backbone b, const std::string& dataset, int fold) {
  return std::string(name_of(b)) + "_" + dataset + "_fold" + std::to_string(fold);
}

/// Write weights plus model configuration and caller-supplied metadata
/// (dataset, fold, seed, ...) atomically.
template <typename T>
void save_checkpoint(Model<T>& model, const std::filesystem::path& path, nlohmann::json metadata) {
  metadata["model"] = to_json(model.config());
  const std::string meta = metadata.dump();
  std::ostringstream out(std::ios::binary);
  out.write(kCheckpointMagic, 8);
  nn::detail::put<std::uint64_t>(out, meta.size());
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  nn::write_tensors(out, nn::snapshot(model.parameters()));
  write_atomic(path, out.str());
}

struct Checkpoint {
  nlohmann::json metadata;
  nn::NamedTensors tensors;
};

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw DataError(path.string() + " is not a checkpoint");
  }
  const auto len = nn::detail::get<std::uint64_t>(in, "metadata length");
  std::string meta(len, '\0');
  in.read(meta.data(), static_cast<std::streamsize>(len));
  Checkpoint ck;
  ck.metadata = nlohmann::json::parse(meta);
  ck.tensors = nn::read_tensors(in);
  return ck;
}

/// Rebuild a model from a checkpoint without touching pretrained weights.
template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path) {
  auto ck = read_checkpoint(path);
  auto config = model_config_from_json(ck.metadata.at("model"));
  config.pretrained = false;
  Model<T> model = build_model<T>(config);
  nn::assign(model.parameters(), ck.tensors);
  return model;
}

}  // namespace cxr::models
