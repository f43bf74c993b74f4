#pragma once

#include <cstdint>
#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cxr/core/error.hpp"

namespace cxr::train {

/// Fine-tuning hyperparameters. Defaults are the reference protocol:
/// Adam(0.9, 0.999), learning rate 1e-5, batch 3, 30 epochs, cross-entropy.
struct TrainConfig {
  int epochs = 30;
  int batch_size = 3;
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 2020;
  std::string device = "cpu";
  int eval_batch_size = 8;

  /// Every hyperparameter that differs from the reference protocol, as
  /// "name=value (default x)". Written into each run record.
  std::vector<std::string> overrides() const {
    const TrainConfig ref;
    std::vector<std::string> out;
    auto note = [&](const char* name, auto value, auto def) {
      if (value == def) return;
      std::ostringstream s;
      s << name << "=" << value << " (default " << def << ")";
      out.push_back(s.str());
    };
    note("epochs", epochs, ref.epochs);
    note("batch_size", batch_size, ref.batch_size);
    note("learning_rate", learning_rate, ref.learning_rate);
    note("beta1", beta1, ref.beta1);
    note("beta2", beta2, ref.beta2);
    note("epsilon", epsilon, ref.epsilon);
    return out;
  }

  void validate() const {
    if (epochs < 0) throw UsageError("epochs must be >= 0");
    if (batch_size < 1) throw UsageError("batch_size must be >= 1");
    if (eval_batch_size < 1) throw UsageError("eval_batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw UsageError("learning_rate must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw UsageError("betas must be in [0, 1)");
    if (!(epsilon > 0.0)) throw UsageError("epsilon must be > 0");
    if (device != "cpu") {
      throw UsageError("device '" + device + "' is not available: this build runs on the CPU only (use device=cpu)");
    }
  }
};

inline constexpr const char* kDeviceEnv = "CXR_DEVICE";

/// Device from the environment when the configuration leaves it unset.
inline std::string device_from_env(const std::string& configured) {
  if (!configured.empty()) return configured;
  const char* env = std::getenv(kDeviceEnv);
  return env && *env ? env : "cpu";
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"optimizer", "adam"},       {"epochs", c.epochs},       {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate}, {"beta1", c.beta1}, {"beta2", c.beta2},
          {"epsilon", c.epsilon},      {"weight_decay", 0.0},      {"loss", "cross_entropy"},
          {"seed", c.seed},            {"device", c.device},       {"eval_batch_size", c.eval_batch_size}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.epsilon = j.at("epsilon").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.device = j.value("device", "cpu");
  c.eval_batch_size = j.value("eval_batch_size", 8);
  return c;
}

}  // namespace cxr::train
