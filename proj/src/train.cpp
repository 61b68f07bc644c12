#include "fairij/train.hpp"

#include <cmath>
#include <vector>

#include "fairij/errors.hpp"
#include "fairij/rng.hpp"

namespace fairij {

Optimizer optimizer_from_string(const std::string& name) {
  if (name == "adam") return Optimizer::adam;
  if (name == "sgd") return Optimizer::sgd;
  throw InputError("unknown optimizer '" + name + "'");
}

std::string to_string(Optimizer o) {
  return o == Optimizer::adam ? "adam" : "sgd";
}

CheckpointSelection checkpoint_selection_from_string(const std::string& name) {
  if (name == "best_val_accuracy") return CheckpointSelection::best_val_accuracy;
  if (name == "last") return CheckpointSelection::last;
  throw InputError("unknown checkpoint selection '" + name + "'");
}

std::string to_string(CheckpointSelection c) {
  return c == CheckpointSelection::best_val_accuracy ? "best_val_accuracy" : "last";
}

void TrainConfig::validate() const {
  if (epochs < 1) throw InputError("epochs must be >= 1");
  if (batch_size < 1) throw InputError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw InputError("learning_rate must be positive");
}

namespace {

double batch_mean_loss(const Eigen::VectorXd& probs, const Eigen::VectorXd& labels) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    total += labels[i] > 0.5 ? -std::log(probs[i]) : -std::log(1.0 - probs[i]);
  }
  return total / static_cast<double>(probs.size());
}

}  // namespace

double accuracy(const MlpModel& model, const TabularDataset& data,
                double threshold) {
  data.validate();
  const Eigen::VectorXd probs = forward_batch(model, data.inputs());
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const int predicted = probs[i] >= threshold ? 1 : 0;
    if (predicted == data.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(probs.size());
}

double mean_loss(const MlpModel& model, const TabularDataset& data) {
  data.validate();
  const Eigen::VectorXd probs = forward_batch(model, data.inputs());
  return batch_mean_loss(probs, data.labels_vector());
}

ParamVector mean_grad(const MlpModel& model, const TabularDataset& data) {
  data.validate();
  const Eigen::MatrixXd inputs = data.inputs();
  const Eigen::VectorXd probs = forward_batch(model, inputs);
  const Eigen::VectorXd weights =
      (probs - data.labels_vector()) / static_cast<double>(data.size());
  return weighted_logit_grad(model, inputs, weights);
}

namespace {

struct AdamState {
  ParamVector m;
  ParamVector v;
  long t = 0;
};

void apply_update(MlpModel& model, const ParamVector& grad, const TrainConfig& cfg,
                  AdamState& adam) {
  if (cfg.optimizer == Optimizer::sgd) {
    model.params -= cfg.learning_rate * grad;
    return;
  }
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;
  ++adam.t;
  adam.m = beta1 * adam.m + (1.0 - beta1) * grad;
  adam.v = beta2 * adam.v.array() + (1.0 - beta2) * grad.array().square();
  const double correction1 = 1.0 - std::pow(beta1, static_cast<double>(adam.t));
  const double correction2 = 1.0 - std::pow(beta2, static_cast<double>(adam.t));
  model.params.array() -= cfg.learning_rate * (adam.m.array() / correction1) /
                          ((adam.v.array() / correction2).sqrt() + eps);
}

}  // namespace

TrainResult train_erm(const TabularDataset& train, const TabularDataset& val,
                      const MlpArchitecture& arch, const TrainConfig& cfg) {
  cfg.validate();
  arch.validate();
  train.validate();
  val.validate();
  if (train.width() != arch.input_dim || val.width() != arch.input_dim) {
    throw InputError("dataset width does not match architecture input_dim");
  }

  MlpModel model{arch, init_params(arch, cfg.seed)};
  const Eigen::MatrixXd inputs = train.inputs();
  const Eigen::VectorXd labels = train.labels_vector();
  const int n = static_cast<int>(train.size());

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng shuffler(derive_seed(cfg.seed, 0x5701));

  AdamState adam;
  adam.m = ParamVector::Zero(model.params.size());
  adam.v = ParamVector::Zero(model.params.size());

  TrainResult result{model, -1.0, 0};
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffler.shuffle(order);
    for (int start = 0, batch_id = 0; start < n; start += cfg.batch_size, ++batch_id) {
      const int count = std::min(cfg.batch_size, n - start);
      Eigen::MatrixXd batch_inputs(inputs.rows(), count);
      Eigen::VectorXd batch_labels(count);
      for (int i = 0; i < count; ++i) {
        batch_inputs.col(i) = inputs.col(order[start + i]);
        batch_labels[i] = labels[order[start + i]];
      }
      const Eigen::VectorXd probs = forward_batch(model, batch_inputs);
      const double loss = batch_mean_loss(probs, batch_labels);
      if (!std::isfinite(loss)) {
        throw NumericError("training diverged: non-finite loss at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(batch_id));
      }
      const Eigen::VectorXd weights =
          (probs - batch_labels) / static_cast<double>(count);
      const ParamVector grad = weighted_logit_grad(model, batch_inputs, weights);
      if (!grad.allFinite()) {
        throw NumericError("training diverged: non-finite gradient at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(batch_id));
      }
      apply_update(model, grad, cfg, adam);
    }

    if (cfg.checkpoint_selection == CheckpointSelection::best_val_accuracy) {
      const double val_acc = accuracy(model, val);
      if (val_acc > result.best_val_accuracy) {
        result.best_val_accuracy = val_acc;
        result.best_epoch = epoch;
        result.model = model;
      }
    }
  }

  if (cfg.checkpoint_selection == CheckpointSelection::last) {
    result.model = model;
    result.best_epoch = cfg.epochs;
    result.best_val_accuracy = accuracy(model, val);
  }
  return result;
}

}  // namespace fairij
