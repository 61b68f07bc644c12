#pragma once

#include <array>
#include <string>

#include "fairij/dataset.hpp"
#include "fairij/mlp.hpp"

namespace fairij {

/// dp: demographic parity gap. eo: equalized-odds gap (sum over both label
/// values). eqopp: equality of opportunity, the y=1 term of eo alone.
enum class FairnessMetricKind { dp, eo, eqopp };

FairnessMetricKind metric_from_string(const std::string& name);
std::string to_string(FairnessMetricKind kind);

/// Per-group and per-(group, label) prediction summaries on one dataset.
struct GroupStats {
  std::array<std::int64_t, 2> group_count{};          // [s]
  std::array<double, 2> group_positive_rate{};        // hard, [s]
  std::array<double, 2> group_mean_prob{};            // soft, [s]
  std::array<std::array<std::int64_t, 2>, 2> cell_count{};    // [s][y]
  std::array<std::array<double, 2>, 2> cell_positive_rate{};  // hard
  std::array<std::array<double, 2>, 2> cell_mean_prob{};      // soft

  std::int64_t total() const { return group_count[0] + group_count[1]; }
};

GroupStats group_stats(const MlpModel& model, const TabularDataset& data,
                       double threshold = 0.5);

/// Gap between groups in hard predictions 1{p >= threshold}: absolute
/// difference of positive rates (dp), summed per-label differences (eo), or
/// the y=1 difference only (eqopp). Raises an evaluation error naming any
/// empty group or (s, y) cell the requested kind needs.
double hard_metric(const MlpModel& model, const TabularDataset& data,
                   FairnessMetricKind kind, double threshold = 0.5);

/// Same gaps computed from soft probabilities; differentiable in the
/// parameters away from exact group-mean ties.
double surrogate(const MlpModel& model, const TabularDataset& data,
                 FairnessMetricKind kind);

struct SurrogateGrad {
  ParamVector grad;
  /// True when some absolute-value term sat exactly at zero (|difference|
  /// below 1e-12); that term's subgradient was taken as zero.
  bool degenerate = false;
};

/// Exact parameter gradient of surrogate(): for each term, sign(difference)
/// times the difference of group-mean probability gradients.
SurrogateGrad surrogate_grad(const MlpModel& model, const TabularDataset& data,
                             FairnessMetricKind kind);

}  // namespace fairij
