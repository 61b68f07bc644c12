#include "fairij/influence.hpp"

#include <algorithm>

#include "fairij/errors.hpp"
#include "fairij/train.hpp"

namespace fairij {

Eigen::VectorXd per_instance_grad_dots(const MlpModel& model,
                                       const TabularDataset& train,
                                       const ParamVector& direction) {
  train.validate();
  const Eigen::MatrixXd inputs = train.inputs();
  const Eigen::VectorXd probs = forward_batch(model, inputs);
  // g_n = (p_n - y_n) * dlogit_n/dparams, so g_n . r factorizes.
  const Eigen::VectorXd logit_dots = logit_grad_dots(model, inputs, direction);
  return (probs - train.labels_vector()).cwiseProduct(logit_dots);
}

InfluenceReport fairness_influence(const MlpModel& model,
                                   const TabularDataset& train,
                                   const TabularDataset& val,
                                   FairnessMetricKind kind,
                                   const IhvpSolver& solver) {
  model.validate();
  train.validate();

  InfluenceReport report;
  report.metric = kind;
  report.config = solver.config();
  report.val_was_train = &val == &train;

  const SurrogateGrad sg = surrogate_grad(model, val, kind);
  report.degenerate = sg.degenerate;
  if (sg.grad.isZero(0.0)) {
    // Nothing to solve against: the surrogate sits on an absolute-value tie
    // (or the model is constant); every influence is zero.
    report.ihvp_vector = ParamVector::Zero(model.params.size());
    report.scores = Eigen::VectorXd::Zero(train.size());
    return report;
  }

  report.ihvp_vector = solver.solve(sg.grad);
  report.scores = -per_instance_grad_dots(model, train, report.ihvp_vector);
  if (!report.scores.allFinite()) {
    throw NumericError("influence scores are not finite");
  }
  return report;
}

InfluenceReport fairness_influence(const MlpModel& model,
                                   const TabularDataset& train,
                                   const TabularDataset& val,
                                   FairnessMetricKind kind,
                                   const IhvpConfig& cfg) {
  cfg.validate();
  const IhvpSolver solver(model, train, cfg);
  return fairness_influence(model, train, val, kind, solver);
}

Eigen::VectorXd loss_influence(const MlpModel& model, const TabularDataset& train,
                               const TabularDataset& val, const IhvpSolver& solver) {
  model.validate();
  train.validate();
  const ParamVector u = mean_grad(model, val);
  if (u.isZero(0.0)) {
    return Eigen::VectorXd::Zero(train.size());
  }
  const ParamVector r = solver.solve(u);
  Eigen::VectorXd scores = -per_instance_grad_dots(model, train, r);
  if (!scores.allFinite()) {
    throw NumericError("influence scores are not finite");
  }
  return scores;
}

Eigen::VectorXd loss_influence(const MlpModel& model, const TabularDataset& train,
                               const TabularDataset& val, const IhvpConfig& cfg) {
  cfg.validate();
  const IhvpSolver solver(model, train, cfg);
  return loss_influence(model, train, val, solver);
}

TopPositive top_positive(const Eigen::VectorXd& scores, int k) {
  if (k < 0) throw InputError("k must be non-negative");
  std::vector<int> positive;
  for (int i = 0; i < scores.size(); ++i) {
    if (scores[i] > 0.0) positive.push_back(i);
  }
  std::sort(positive.begin(), positive.end(), [&scores](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });

  TopPositive result;
  if (k > static_cast<int>(positive.size())) {
    k = static_cast<int>(positive.size());
    result.clipped = true;
  }
  result.indices.assign(positive.begin(), positive.begin() + k);
  return result;
}

TopPositive top_positive(const InfluenceReport& report, int k) {
  return top_positive(report.scores, k);
}

}  // namespace fairij
