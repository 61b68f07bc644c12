#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fairij/dataset.hpp"
#include "fairij/fairness.hpp"
#include "fairij/ihvp.hpp"
#include "fairij/influence.hpp"
#include "fairij/mlp.hpp"

namespace fairij {

/// fairness_only drops by positive fairness influence alone; loss_aware
/// additionally requires positive influence on validation loss.
enum class SelectionRule { fairness_only, loss_aware };
/// grid scans every (scale, k) pair; early_stop walks k upward per scale and
/// stops at the first candidate that fails to improve on its predecessor.
enum class SearchMode { grid, early_stop };

SelectionRule selection_from_string(const std::string& name);
std::string to_string(SelectionRule r);
SearchMode search_from_string(const std::string& name);
std::string to_string(SearchMode m);

struct MitigationConfig {
  FairnessMetricKind metric = FairnessMetricKind::dp;
  SelectionRule selection = SelectionRule::fairness_only;
  /// Drop counts to try. Empty means the default grid: 40 values spread
  /// uniformly over 0 .. min(2000, number of positive-influence instances).
  std::vector<int> k_grid;
  std::vector<double> scale_grid = {0.01, 0.1, 1.0, 2.0, 3.0, 5.0, 10.0};
  SearchMode search = SearchMode::grid;
  IhvpConfig ihvp;

  void validate() const;
};

struct MetricSnapshot {
  double hard = 0.0;
  double surrogate = 0.0;
  double accuracy = 0.0;
};

struct MitigationResult {
  ParamVector theta_fair;
  /// Dropped training instances in drop order (descending influence).
  std::vector<int> dropped;
  int chosen_k = 0;
  double chosen_scale = 1.0;
  MetricSnapshot before_val;
  MetricSnapshot after_val;
  std::optional<MetricSnapshot> before_test;
  std::optional<MetricSnapshot> after_test;
  /// First-order predicted change of the validation surrogate for the chosen
  /// drop set (non-positive by construction).
  double linearized_metric_delta = 0.0;
  /// True when the search kept the original parameters (nothing to drop, or
  /// no candidate improved validation fairness).
  bool no_op = false;
  InfluenceReport report;
};

/// Candidate drop set: indices with positive fairness influence, optionally
/// intersected with positive loss influence. Ascending index order.
std::vector<int> select_dminus(const InfluenceReport& report, SelectionRule rule,
                               const std::optional<Eigen::VectorXd>& loss_scores = {});

/// Parameter edit that simulates dropping the given instances: theta +
/// ihvp(sum of their loss gradients), computed with one solve.
ParamVector edit_params(const MlpModel& model, const TabularDataset& train,
                        const std::vector<int>& dropped, const IhvpConfig& ihvp);

/// First-order predicted change of the surrogate under a 0/1 instance mask:
/// sum of scores[n] * (mask[n] - 1).
double linearized_delta(const InfluenceReport& report, const std::vector<int>& w_mask);

/// The full post-hoc editor: scores influences once, then searches drop count
/// k and IHVP scaling on the validation hard metric. The searched scale
/// replaces cfg.ihvp.wf_scale. k = 0 (no edit) is always a candidate, so the
/// validation metric never regresses; ties prefer smaller k, then smaller
/// scale. If no candidate helps, the original parameters are returned intact.
MitigationResult fair_ij(const MlpModel& model, const TabularDataset& train,
                         const TabularDataset& val, const MitigationConfig& cfg,
                         const TabularDataset* test = nullptr);

}  // namespace fairij
