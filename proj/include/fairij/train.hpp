#pragma once

#include <cstdint>
#include <string>

#include "fairij/dataset.hpp"
#include "fairij/mlp.hpp"

namespace fairij {

enum class Optimizer { adam, sgd };
enum class CheckpointSelection { best_val_accuracy, last };

Optimizer optimizer_from_string(const std::string& name);
std::string to_string(Optimizer o);
CheckpointSelection checkpoint_selection_from_string(const std::string& name);
std::string to_string(CheckpointSelection c);

struct TrainConfig {
  int epochs = 100;
  int batch_size = 128;
  double learning_rate = 1e-4;
  Optimizer optimizer = Optimizer::adam;
  std::uint64_t seed = 0;
  CheckpointSelection checkpoint_selection = CheckpointSelection::best_val_accuracy;

  void validate() const;
};

struct TrainResult {
  MlpModel model;
  double best_val_accuracy = 0.0;
  int best_epoch = 0;  // epoch (1-based) whose checkpoint was returned
};

/// Fraction of instances whose hard prediction 1{p >= threshold} matches the
/// label.
double accuracy(const MlpModel& model, const TabularDataset& data,
                double threshold = 0.5);

/// Mean binary cross-entropy over the dataset.
double mean_loss(const MlpModel& model, const TabularDataset& data);

/// Mean of the per-instance loss gradients over the dataset, in a fixed
/// summation order so repeated calls are bitwise identical.
ParamVector mean_grad(const MlpModel& model, const TabularDataset& data);

/// Minibatch ERM with seeded initialization and per-epoch seeded shuffling.
/// With best_val_accuracy selection, returns the end-of-epoch parameters with
/// the highest hard validation accuracy (ties go to the earliest epoch).
TrainResult train_erm(const TabularDataset& train, const TabularDataset& val,
                      const MlpArchitecture& arch, const TrainConfig& cfg);

}  // namespace fairij
