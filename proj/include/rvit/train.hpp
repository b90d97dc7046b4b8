#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "rvit/dataset.hpp"
#include "rvit/model.hpp"

namespace rvit::train {

struct TrainConfig {
  int epochs = 5;
  int batch = 8;
  double lr = 0.01;
  double momentum = 0.9;
  /// Learning rate decays linearly to lr * final_lr_fraction over training.
  double final_lr_fraction = 0.1;
  double grad_clip = 5.0;  // global L2 norm; 0 disables

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct TrainResult {
  double val_accuracy = 0.0;
  std::vector<double> epoch_loss;
};

/// Mini-batch SGD with momentum on cross-entropy over the train split; reports
/// accuracy on the test split. Per-example gradients are reduced in index order
/// so serial and parallel execution give identical parameters.
TrainResult train_model(Classifier& model, const data::Dataset& data, const TrainConfig& cfg, std::uint64_t seed);

/// Fraction of the listed examples classified correctly.
double accuracy(const Classifier& model, const data::Dataset& data, const std::vector<std::size_t>& idx);

}  // namespace rvit::train
