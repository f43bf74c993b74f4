#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "cxr/core/random.hpp"
#include "cxr/data/preprocess.hpp"
#include "cxr/data/records.hpp"
#include "cxr/models/model.hpp"
#include "cxr/nn/optim.hpp"
#include "cxr/train/run_record.hpp"

namespace cxr::train {

/// Produces the normalised CHW input of one record for a given backbone.
using SampleLoader = std::function<nn::Tensor<float>(const data::ImageRecord&, models::Backbone)>;

/// Decodes through data::preprocess_image and keeps results in memory up to a
/// byte budget; records beyond it are decoded on every use. Thread-safe.
class ImageCache {
 public:
  explicit ImageCache(std::size_t budget_bytes = std::size_t{1} << 30) : budget_(budget_bytes) {}

  nn::Tensor<float> operator()(const data::ImageRecord& r, models::Backbone b) {
    const int side = models::input_side(b);
    const auto norm = models::normalization_for(b);
    const auto key = r.id + "|" + std::to_string(side) + "|" + std::to_string(norm.mean[0]) + "|" +
                     std::to_string(norm.stddev[0]);
    {
      std::lock_guard lock(mutex_);
      if (auto it = entries_.find(key); it != entries_.end()) return it->second;
    }
    auto t = data::to_chw(data::preprocess_image(r, side, norm));
    std::lock_guard lock(mutex_);
    const std::size_t bytes = t.size() * sizeof(float);
    if (used_ + bytes <= budget_) {
      entries_.emplace(key, t);
      used_ += bytes;
    }
    return t;
  }

  SampleLoader loader() {
    return [this](const data::ImageRecord& r, models::Backbone b) { return (*this)(r, b); };
  }

 private:
  std::size_t budget_;
  std::size_t used_ = 0;
  std::mutex mutex_;
  std::map<std::string, nn::Tensor<float>> entries_;
};

/// Stack CHW samples into an NCHW batch.
inline nn::Tensor<float> make_batch(const std::vector<nn::Tensor<float>>& samples) {
  auto shape = samples.front().shape();
  shape.insert(shape.begin(), static_cast<int>(samples.size()));
  nn::Tensor<float> batch(shape);
  const std::size_t each = samples.front().size();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].shape() != samples.front().shape()) throw ShapeError("batch samples differ in shape");
    std::copy(samples[i].data(), samples[i].data() + each, batch.data() + i * each);
  }
  return batch;
}

/// Positive-class probability and argmax label (ties go to the positive class).
inline Prediction prediction_from_row(std::span<const float> row, int truth = 0) {
  return {truth, nn::argmax_high_tie(row), static_cast<double>(row[1])};
}

/// Inference-mode predictions for the given records.
template <typename T>
std::map<std::string, Prediction> predict(models::Model<T>& model, const data::BinaryDataset& records,
                                          const SampleLoader& load, int batch_size = 8) {
  std::map<std::string, Prediction> out;
  for (std::size_t first = 0; first < records.size(); first += static_cast<std::size_t>(batch_size)) {
    const std::size_t n = std::min(records.size() - first, static_cast<std::size_t>(batch_size));
    std::vector<nn::Tensor<float>> samples;
    for (std::size_t i = 0; i < n; ++i) samples.push_back(load(records.records[first + i], model.config().backbone));
    const auto probs = model.probabilities(make_batch(samples).template cast<T>()).template cast<float>();
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = probs.values().subspan(i * 2, 2);
      const auto& id = records.records[first + i].id;
      out[id] = prediction_from_row(row, records.labels.empty() ? 0 : records.labels[first + i]);
    }
  }
  return out;
}

/// Throws unless train and test share no record id.
inline void assert_disjoint(const data::BinaryDataset& train, const data::BinaryDataset& test) {
  std::set<std::string> test_ids;
  for (const auto& r : test.records) test_ids.insert(r.id);
  for (const auto& r : train.records) {
    if (test_ids.count(r.id)) throw TrainingError("leakage guard: " + r.id + " is in both train and test sets");
  }
}

/// Throws unless predictions cover exactly the test ids.
inline void assert_predictions_cover(const std::map<std::string, Prediction>& preds, const data::BinaryDataset& test) {
  std::set<std::string> ids;
  for (const auto& r : test.records) ids.insert(r.id);
  if (ids.size() != preds.size()) {
    throw TrainingError("leakage guard: " + std::to_string(preds.size()) + " predictions for " +
                        std::to_string(ids.size()) + " test records");
  }
  for (const auto& [id, p] : preds) {
    if (!ids.count(id)) throw TrainingError("leakage guard: prediction for non-test record " + id);
  }
}

using EpochCallback = std::function<void(const EpochLog&)>;

/// Fine-tune `model` on `train` for config.epochs epochs of shuffled
/// mini-batches, measuring test accuracy after every epoch. Predictions come
/// from the final weights.
template <typename T>
RunRecord train_fold(models::Model<T>& model, const data::BinaryDataset& train, const data::BinaryDataset& test,
                     const TrainConfig& config, const SampleLoader& load, int fold = 0,
                     const EpochCallback& on_epoch = {}) {
  config.validate();
  if (train.size() == 0) throw TrainingError("empty training set");
  assert_disjoint(train, test);
  std::set<std::string> test_ids;
  for (const auto& r : test.records) test_ids.insert(r.id);

  const auto started = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.model = model.config();
  rec.dataset = train.name;
  rec.fold = fold;
  rec.train = config;
  rec.train_size = static_cast<int>(train.size());

  auto params = model.parameters();
  nn::Adam<T> adam(params, {config.learning_rate, config.beta1, config.beta2, config.epsilon});
  const auto backbone = model.config().backbone;
  std::vector<std::size_t> order(train.size());
  const auto run_stream = Rng::derive(config.seed, static_cast<std::uint64_t>(fold));

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng(Rng::derive(run_stream, static_cast<std::uint64_t>(epoch))).shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t correct = 0, seen = 0;
    for (std::size_t first = 0; first < order.size(); first += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t n = std::min(order.size() - first, static_cast<std::size_t>(config.batch_size));
      std::vector<nn::Tensor<float>> samples;
      std::vector<int> targets;
      for (std::size_t i = 0; i < n; ++i) {
        const auto& r = train.records[order[first + i]];
        if (test_ids.count(r.id)) throw TrainingError("leakage guard: test record " + r.id + " in a training batch");
        samples.push_back(load(r, backbone));
        targets.push_back(train.labels[order[first + i]]);
      }
      model.zero_grad();
      const auto logits = model.logits(make_batch(samples).template cast<T>(), nn::Mode::train);
      const auto result = nn::softmax_cross_entropy(logits, std::span<const int>(targets));
      if (!std::isfinite(result.loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                            std::to_string(first) + " (" + train.records[order[first]].id + ")");
      }
      model.backward(result.grad);
      adam.step();
      loss_sum += result.loss * static_cast<double>(n);
      correct += static_cast<std::size_t>(result.correct);
      seen += n;
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(seen);
    log.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    if (test.size() > 0) {
      const auto preds = predict(model, test, load, config.eval_batch_size);
      std::size_t hits = 0;
      for (const auto& [id, p] : preds) hits += p.label == p.truth;
      log.test_accuracy = static_cast<double>(hits) / static_cast<double>(preds.size());
    }
    rec.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
  }

  rec.predictions = predict(model, test, load, config.eval_batch_size);
  assert_predictions_cover(rec.predictions, test);
  rec.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return rec;
}

}  // namespace cxr::train
