#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fairij/dataset.hpp"
#include "fairij/fairness.hpp"
#include "fairij/ihvp.hpp"
#include "fairij/mlp.hpp"
#include "fairij/train.hpp"

namespace fairij {

/// Deterministic full-batch training used as ground truth: gradient descent
/// with backtracking line search on mean loss plus a tiny L2 ridge, run to a
/// gradient-norm tolerance so leave-out deltas carry no optimizer noise.
struct OracleTrainConfig {
  int max_iterations = 200000;
  double tolerance = 1e-8;   // stop when the objective gradient norm falls below
  double l2 = 1e-4;          // ridge that makes the oracle objective strictly convex
  double initial_step = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

MlpModel oracle_train(const TabularDataset& train, const MlpArchitecture& arch,
                      const OracleTrainConfig& cfg);

struct LooEntry {
  int index = -1;
  double surrogate_delta = 0.0;  // surrogate(retrained) - surrogate(base), on val
  double loss_delta = 0.0;       // mean val loss delta
  bool ok = true;
  std::string error;
};

struct LooResult {
  std::vector<LooEntry> entries;
  double base_surrogate = 0.0;
  double base_loss = 0.0;
};

/// Exact leave-one-out ground truth: retrains from the same seeded init with
/// one instance removed and reports the change of the validation surrogate
/// and of mean validation loss. Capped at 1000 training instances and 200
/// retrains; a diverging retrain yields an error entry, the rest proceed.
LooResult loo_retrain_influence(const TabularDataset& train,
                                const TabularDataset& val,
                                const MlpArchitecture& arch,
                                const OracleTrainConfig& cfg,
                                FairnessMetricKind kind,
                                const std::vector<int>& indices);

/// Max over coordinates of the deviation between `grad` and a central finite
/// difference of f at `point` (step 1e-5 * (1 + |coordinate|)), measured
/// relative to the larger max-norm of the two gradients (floored at 1e-8).
/// Normalizing by the gradient's scale rather than per coordinate keeps the
/// check meaningful on near-flat coordinates, where differencing an O(1)
/// function leaves ~1e-11 of cancellation noise that would otherwise swamp a
/// tiny but correct derivative.
double finite_diff_check(const std::function<double(const ParamVector&)>& f,
                         const ParamVector& grad, const ParamVector& point);

struct IhvpComparison {
  std::string method_a;
  std::string method_b;           // the reference both arrays are rescaled to
  Eigen::VectorXd scores_a;       // raw scores
  Eigen::VectorXd scores_b;
  double rescale_a = 1.0;         // multiplicative factors matching means
  double rescale_b = 1.0;
  double mad = 0.0;               // median |a' - b'| after rescaling
  double r_squared = 0.0;         // of a' against b'
};

/// Computes fairness influence scores under two IHVP engines, rescales both
/// arrays to the mean of the second (reference) array, and reports MAD and
/// R-squared of the agreement.
IhvpComparison compare_ihvp(const MlpModel& model, const TabularDataset& train,
                            const TabularDataset& val, FairnessMetricKind kind,
                            const IhvpConfig& cfg_a, const IhvpConfig& cfg_b);

/// Same comparison with mean validation loss as the influence target instead
/// of a group metric; `val` may be a single instance.
IhvpComparison compare_ihvp_loss(const MlpModel& model,
                                 const TabularDataset& train,
                                 const TabularDataset& val,
                                 const IhvpConfig& cfg_a,
                                 const IhvpConfig& cfg_b);

/// One scatter point of the accuracy study: a training instance's influence
/// score under the reference engine and under an iterative approximation,
/// both after mean rescaling.
struct MoonsStudyPoint {
  int depth = 1;
  int run = 0;
  std::string method;
  double exact_score = 0.0;
  double approx_score = 0.0;
};

struct MoonsStudyRow {
  int depth = 1;
  int run = 0;
  std::string method;
  double mad = 0.0;
  double r_squared = 0.0;
};

struct MoonsStudyConfig {
  int n = 10000;
  double noise = 0.2;
  double separation = 0.4;
  std::vector<int> depths = {1, 2, 3};
  int width = 5;
  int runs = 10;
  std::uint64_t seed = 0;
  int train_epochs = 200;
  int train_batch_size = 128;
  double train_learning_rate = 0.001;
  int iterations = 1000;          // for both iterative engines
  double neumann_scale = 25.0;
  // With B of N gradients consumed, the estimate is damping*I + (B/N) * mean
  // outer product, so damping = exact_damping * B / N keeps the two solves on
  // the same effective ridge (0.025 * 1000 / 8000 here).
  double woodfisher_damping = 0.003125;
  double exact_damping = 0.025;   // matches the Neumann truncation floor scale/B
  bool keep_points = true;

  void validate() const;
};

struct MoonsStudyOutcome {
  std::vector<MoonsStudyRow> rows;
  std::vector<MoonsStudyPoint> points;
};

/// The IHVP accuracy study: per run, draw a two-moons set, train one model
/// per depth, and compare woodfisher and neumann influence scores against the
/// dense reference solve, targeting the loss at one random held-out point.
MoonsStudyOutcome run_moons_study(const MoonsStudyConfig& cfg);

}  // namespace fairij
