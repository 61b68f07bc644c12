#include "fairij/fairness.hpp"

#include <cmath>

#include "fairij/errors.hpp"

namespace fairij {
namespace {

constexpr double kDegenerateTolerance = 1e-12;

void require_groups(const GroupStats& stats) {
  for (int s = 0; s < 2; ++s) {
    if (stats.group_count[s] == 0) {
      throw EvalError("empty sensitive group s=" + std::to_string(s));
    }
  }
}

void require_cells(const GroupStats& stats, int y) {
  for (int s = 0; s < 2; ++s) {
    if (stats.cell_count[s][y] == 0) {
      throw EvalError("empty cell (s=" + std::to_string(s) +
                      ", y=" + std::to_string(y) + ")");
    }
  }
}

void require_for_kind(const GroupStats& stats, FairnessMetricKind kind) {
  require_groups(stats);
  if (kind == FairnessMetricKind::eo) {
    require_cells(stats, 0);
    require_cells(stats, 1);
  } else if (kind == FairnessMetricKind::eqopp) {
    require_cells(stats, 1);
  }
}

}  // namespace

FairnessMetricKind metric_from_string(const std::string& name) {
  if (name == "dp") return FairnessMetricKind::dp;
  if (name == "eo") return FairnessMetricKind::eo;
  if (name == "eqopp") return FairnessMetricKind::eqopp;
  throw InputError("unknown fairness metric '" + name + "'");
}

std::string to_string(FairnessMetricKind kind) {
  switch (kind) {
    case FairnessMetricKind::dp: return "dp";
    case FairnessMetricKind::eo: return "eo";
    case FairnessMetricKind::eqopp: return "eqopp";
  }
  return "dp";
}

GroupStats group_stats(const MlpModel& model, const TabularDataset& data,
                       double threshold) {
  data.validate();
  const Eigen::VectorXd probs = forward_batch(model, data.inputs());

  GroupStats stats;
  std::array<double, 2> group_prob_sum{};
  std::array<double, 2> group_hard_sum{};
  std::array<std::array<double, 2>, 2> cell_prob_sum{};
  std::array<std::array<double, 2>, 2> cell_hard_sum{};
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const int s = data.sensitive[i];
    const int y = data.labels[i];
    const double p = probs[i];
    const double hard = p >= threshold ? 1.0 : 0.0;
    ++stats.group_count[s];
    ++stats.cell_count[s][y];
    group_prob_sum[s] += p;
    group_hard_sum[s] += hard;
    cell_prob_sum[s][y] += p;
    cell_hard_sum[s][y] += hard;
  }
  for (int s = 0; s < 2; ++s) {
    if (stats.group_count[s] > 0) {
      stats.group_mean_prob[s] = group_prob_sum[s] / stats.group_count[s];
      stats.group_positive_rate[s] = group_hard_sum[s] / stats.group_count[s];
    }
    for (int y = 0; y < 2; ++y) {
      if (stats.cell_count[s][y] > 0) {
        stats.cell_mean_prob[s][y] = cell_prob_sum[s][y] / stats.cell_count[s][y];
        stats.cell_positive_rate[s][y] = cell_hard_sum[s][y] / stats.cell_count[s][y];
      }
    }
  }
  return stats;
}

double hard_metric(const MlpModel& model, const TabularDataset& data,
                   FairnessMetricKind kind, double threshold) {
  const GroupStats stats = group_stats(model, data, threshold);
  require_for_kind(stats, kind);
  switch (kind) {
    case FairnessMetricKind::dp:
      return std::abs(stats.group_positive_rate[1] - stats.group_positive_rate[0]);
    case FairnessMetricKind::eo:
      return std::abs(stats.cell_positive_rate[1][0] - stats.cell_positive_rate[0][0]) +
             std::abs(stats.cell_positive_rate[1][1] - stats.cell_positive_rate[0][1]);
    case FairnessMetricKind::eqopp:
      return std::abs(stats.cell_positive_rate[1][1] - stats.cell_positive_rate[0][1]);
  }
  return 0.0;
}

double surrogate(const MlpModel& model, const TabularDataset& data,
                 FairnessMetricKind kind) {
  const GroupStats stats = group_stats(model, data);
  require_for_kind(stats, kind);
  switch (kind) {
    case FairnessMetricKind::dp:
      return std::abs(stats.group_mean_prob[1] - stats.group_mean_prob[0]);
    case FairnessMetricKind::eo:
      return std::abs(stats.cell_mean_prob[1][0] - stats.cell_mean_prob[0][0]) +
             std::abs(stats.cell_mean_prob[1][1] - stats.cell_mean_prob[0][1]);
    case FairnessMetricKind::eqopp:
      return std::abs(stats.cell_mean_prob[1][1] - stats.cell_mean_prob[0][1]);
  }
  return 0.0;
}

SurrogateGrad surrogate_grad(const MlpModel& model, const TabularDataset& data,
                             FairnessMetricKind kind) {
  const GroupStats stats = group_stats(model, data);
  require_for_kind(stats, kind);
  const Eigen::MatrixXd inputs = data.inputs();
  const Eigen::VectorXd probs = forward_batch(model, inputs);

  // Each |difference| term contributes, per member instance of cell (s, ...),
  // a weight of +/- sign(difference) * p(1-p) / cell size on that instance's
  // logit gradient; one backward pass handles all terms at once.
  SurrogateGrad result;
  Eigen::VectorXd weights = Eigen::VectorXd::Zero(probs.size());

  // sign of each term's soft difference, or 0 when degenerate
  auto term_sign = [&result](double difference) {
    if (std::abs(difference) < kDegenerateTolerance) {
      result.degenerate = true;
      return 0.0;
    }
    return difference > 0.0 ? 1.0 : -1.0;
  };

  double dp_sign = 0.0;
  std::array<double, 2> eo_sign{0.0, 0.0};
  if (kind == FairnessMetricKind::dp) {
    dp_sign = term_sign(stats.group_mean_prob[1] - stats.group_mean_prob[0]);
  }
  if (kind == FairnessMetricKind::eo || kind == FairnessMetricKind::eqopp) {
    eo_sign[1] = term_sign(stats.cell_mean_prob[1][1] - stats.cell_mean_prob[0][1]);
  }
  if (kind == FairnessMetricKind::eo) {
    eo_sign[0] = term_sign(stats.cell_mean_prob[1][0] - stats.cell_mean_prob[0][0]);
  }

  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const int s = data.sensitive[i];
    const int y = data.labels[i];
    const double sigmoid_slope = probs[i] * (1.0 - probs[i]);
    const double group_direction = s == 1 ? 1.0 : -1.0;
    double w = 0.0;
    if (kind == FairnessMetricKind::dp) {
      w = dp_sign * group_direction / static_cast<double>(stats.group_count[s]);
    } else if (eo_sign[y] != 0.0) {
      w = eo_sign[y] * group_direction / static_cast<double>(stats.cell_count[s][y]);
    }
    weights[i] = w * sigmoid_slope;
  }

  result.grad = weighted_logit_grad(model, inputs, weights);
  return result;
}

}  // namespace fairij
