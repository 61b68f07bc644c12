#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fairij/dataset.hpp"
#include "fairij/fairness.hpp"
#include "fairij/ihvp.hpp"
#include "fairij/mlp.hpp"

namespace fairij {

/// Per-training-instance influence scores on a validation functional. A
/// positive score means up-weighting the instance increases the functional,
/// so dropping it is predicted (to first order) to decrease it.
struct InfluenceReport {
  FairnessMetricKind metric = FairnessMetricKind::dp;
  Eigen::VectorXd scores;                       // fairness influence per instance
  std::optional<Eigen::VectorXd> loss_scores;   // validation-loss influence
  ParamVector ihvp_vector;                      // cached H^{-1} grad(M)
  IhvpConfig config;
  std::string validation_id;
  /// True when the surrogate gradient hit an absolute-value tie; with a fully
  /// zero gradient all scores are zero.
  bool degenerate = false;
  /// True when no validation set was supplied and the surrogate was taken on
  /// the training set instead.
  bool val_was_train = false;
};

/// Influence of each training instance on the validation fairness surrogate:
/// one inverse-Hessian solve against the surrogate gradient, then a dot
/// product with every per-instance training gradient.
InfluenceReport fairness_influence(const MlpModel& model,
                                   const TabularDataset& train,
                                   const TabularDataset& val,
                                   FairnessMetricKind kind,
                                   const IhvpConfig& cfg);

/// Variant reusing an existing engine (saves re-factorizing / re-streaming
/// when several solves share one model).
InfluenceReport fairness_influence(const MlpModel& model,
                                   const TabularDataset& train,
                                   const TabularDataset& val,
                                   FairnessMetricKind kind,
                                   const IhvpSolver& solver);

/// Influence of each training instance on mean validation loss.
Eigen::VectorXd loss_influence(const MlpModel& model, const TabularDataset& train,
                               const TabularDataset& val, const IhvpConfig& cfg);

Eigen::VectorXd loss_influence(const MlpModel& model, const TabularDataset& train,
                               const TabularDataset& val, const IhvpSolver& solver);

struct TopPositive {
  std::vector<int> indices;
  /// True when the requested k exceeded the number of strictly positive
  /// scores and was clipped down to it.
  bool clipped = false;
};

/// Indices of the k largest strictly positive scores, descending, with ties
/// broken by ascending original index.
TopPositive top_positive(const InfluenceReport& report, int k);

/// Same selection over an arbitrary score array (used by the loss-aware
/// variant, which filters on two arrays).
TopPositive top_positive(const Eigen::VectorXd& scores, int k);

/// Dot products of every per-instance training-loss gradient with a fixed
/// parameter-space direction, without materializing the gradients.
Eigen::VectorXd per_instance_grad_dots(const MlpModel& model,
                                       const TabularDataset& train,
                                       const ParamVector& direction);

}  // namespace fairij
