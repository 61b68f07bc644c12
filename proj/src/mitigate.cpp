#include "fairij/mitigate.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "fairij/errors.hpp"
#include "fairij/train.hpp"

namespace fairij {

SelectionRule selection_from_string(const std::string& name) {
  if (name == "fairness_only") return SelectionRule::fairness_only;
  if (name == "loss_aware") return SelectionRule::loss_aware;
  throw InputError("unknown selection rule '" + name + "'");
}

std::string to_string(SelectionRule r) {
  return r == SelectionRule::fairness_only ? "fairness_only" : "loss_aware";
}

SearchMode search_from_string(const std::string& name) {
  if (name == "grid") return SearchMode::grid;
  if (name == "early_stop") return SearchMode::early_stop;
  throw InputError("unknown search mode '" + name + "'");
}

std::string to_string(SearchMode m) {
  return m == SearchMode::grid ? "grid" : "early_stop";
}

void MitigationConfig::validate() const {
  ihvp.validate();
  if (scale_grid.empty()) throw InputError("scale_grid must be non-empty");
  for (double s : scale_grid) {
    if (!(s > 0.0)) throw InputError("scale_grid values must be positive");
  }
  for (int k : k_grid) {
    if (k < 0) throw InputError("k_grid values must be non-negative");
  }
}

std::vector<int> select_dminus(const InfluenceReport& report, SelectionRule rule,
                               const std::optional<Eigen::VectorXd>& loss_scores) {
  if (rule == SelectionRule::loss_aware && !loss_scores) {
    throw InputError("loss_aware selection requires loss influence scores");
  }
  if (loss_scores && loss_scores->size() != report.scores.size()) {
    throw InputError("loss score length does not match fairness score length");
  }
  std::vector<int> out;
  for (int i = 0; i < report.scores.size(); ++i) {
    if (report.scores[i] <= 0.0) continue;
    if (rule == SelectionRule::loss_aware && (*loss_scores)[i] <= 0.0) continue;
    out.push_back(i);
  }
  return out;
}

ParamVector edit_params(const MlpModel& model, const TabularDataset& train,
                        const std::vector<int>& dropped, const IhvpConfig& ihvp) {
  model.validate();
  train.validate();
  if (dropped.empty()) return model.params;

  ParamVector summed = ParamVector::Zero(model.params.size());
  Eigen::VectorXd weight(1);
  const Eigen::VectorXd probs = forward_batch(model, train.inputs());
  for (int idx : dropped) {
    if (idx < 0 || idx >= train.size()) {
      throw InputError("dropped index " + std::to_string(idx) + " out of range");
    }
    weight[0] = probs[idx] - static_cast<double>(train.labels[idx]);
    summed += weighted_logit_grad(model, train.features.row(idx).transpose(), weight);
  }
  const IhvpSolver solver(model, train, ihvp);
  return model.params + solver.solve(summed);
}

double linearized_delta(const InfluenceReport& report, const std::vector<int>& w_mask) {
  if (static_cast<Eigen::Index>(w_mask.size()) != report.scores.size()) {
    throw InputError("mask length does not match score length");
  }
  double delta = 0.0;
  for (std::size_t i = 0; i < w_mask.size(); ++i) {
    if (w_mask[i] != 0 && w_mask[i] != 1) {
      throw InputError("mask entries must be 0 or 1");
    }
    delta += report.scores[static_cast<Eigen::Index>(i)] *
             (static_cast<double>(w_mask[i]) - 1.0);
  }
  return delta;
}

namespace {

MetricSnapshot snapshot(const MlpModel& model, const TabularDataset& data,
                        FairnessMetricKind kind) {
  MetricSnapshot s;
  s.hard = hard_metric(model, data, kind);
  s.surrogate = surrogate(model, data, kind);
  s.accuracy = accuracy(model, data);
  return s;
}

// Candidate drop order: strictly positive scores (optionally also positive
// loss influence), descending score, ties by ascending index.
std::vector<int> drop_order(const InfluenceReport& report, SelectionRule rule,
                            const std::optional<Eigen::VectorXd>& loss_scores) {
  std::vector<int> candidates = select_dminus(report, rule, loss_scores);
  std::sort(candidates.begin(), candidates.end(), [&report](int a, int b) {
    if (report.scores[a] != report.scores[b]) {
      return report.scores[a] > report.scores[b];
    }
    return a < b;
  });
  return candidates;
}

std::vector<int> resolve_k_grid(const std::vector<int>& requested, int available) {
  std::set<int> ks;
  ks.insert(0);
  if (requested.empty()) {
    const int k_max = std::min(2000, available);
    for (int i = 0; i < 40; ++i) {
      ks.insert(static_cast<int>(std::lround(k_max * (i / 39.0))));
    }
  } else {
    for (int k : requested) ks.insert(std::min(k, available));
  }
  return std::vector<int>(ks.begin(), ks.end());
}

struct Candidate {
  double metric = 0.0;
  int k = 0;
  double scale = 1.0;

  bool operator<(const Candidate& other) const {
    if (metric != other.metric) return metric < other.metric;
    if (k != other.k) return k < other.k;
    return scale < other.scale;
  }
};

MitigationResult finish_no_op(MitigationResult&& result, const MlpModel& model) {
  result.theta_fair = model.params;
  result.chosen_k = 0;
  result.chosen_scale = 1.0;
  result.dropped.clear();
  result.after_val = result.before_val;
  result.after_test = result.before_test;
  result.linearized_metric_delta = 0.0;
  result.no_op = true;
  return std::move(result);
}

}  // namespace

MitigationResult fair_ij(const MlpModel& model, const TabularDataset& train,
                         const TabularDataset& val, const MitigationConfig& cfg,
                         const TabularDataset* test) {
  cfg.validate();
  model.validate();
  train.validate();
  val.validate();

  MitigationResult result;
  result.before_val = snapshot(model, val, cfg.metric);
  if (test != nullptr) {
    result.before_test = snapshot(model, *test, cfg.metric);
  }

  // Scores and edits scale linearly with the final IHVP multiplier, so a
  // single solve at scale 1 serves the whole scale grid.
  IhvpConfig base_cfg = cfg.ihvp;
  base_cfg.wf_scale = 1.0;
  const IhvpSolver solver(model, train, base_cfg);

  result.report = fairness_influence(model, train, val, cfg.metric, solver);
  std::optional<Eigen::VectorXd> loss_scores;
  if (cfg.selection == SelectionRule::loss_aware) {
    loss_scores = loss_influence(model, train, val, solver);
  }

  const std::vector<int> candidates =
      drop_order(result.report, cfg.selection, loss_scores);
  auto store_scores = [&](double scale) {
    result.report.scores *= scale;
    result.report.ihvp_vector *= scale;
    result.report.config.wf_scale = scale;
    if (loss_scores) {
      result.report.loss_scores = *loss_scores * scale;
    }
  };

  if (candidates.empty()) {
    store_scores(1.0);
    return finish_no_op(std::move(result), model);
  }

  const std::vector<int> k_grid =
      resolve_k_grid(cfg.k_grid, static_cast<int>(candidates.size()));
  const std::vector<int> nonzero_ks(k_grid.begin() + 1, k_grid.end());

  // Prefix sums of candidate gradients at every grid k, solved in one pass.
  Eigen::MatrixXd edits;
  if (!nonzero_ks.empty()) {
    Eigen::MatrixXd prefix_sums(model.params.size(), nonzero_ks.size());
    ParamVector running = ParamVector::Zero(model.params.size());
    const Eigen::VectorXd probs = forward_batch(model, train.inputs());
    Eigen::VectorXd weight(1);
    std::size_t column = 0;
    for (int i = 0; i < nonzero_ks.back(); ++i) {
      const int idx = candidates[i];
      weight[0] = probs[idx] - static_cast<double>(train.labels[idx]);
      running += weighted_logit_grad(model, train.features.row(idx).transpose(), weight);
      while (column < nonzero_ks.size() && nonzero_ks[column] == i + 1) {
        prefix_sums.col(static_cast<Eigen::Index>(column)) = running;
        ++column;
      }
    }
    edits = solver.solve_multi(prefix_sums);
  }

  auto evaluate = [&](int k_index, double scale) {
    MlpModel candidate{model.arch,
                       model.params + scale * edits.col(k_index)};
    return hard_metric(candidate, val, cfg.metric);
  };

  std::vector<double> scales = cfg.scale_grid;
  std::sort(scales.begin(), scales.end());

  Candidate best{result.before_val.hard, 0, 1.0};
  for (double scale : scales) {
    if (cfg.search == SearchMode::grid) {
      for (std::size_t i = 0; i < nonzero_ks.size(); ++i) {
        const Candidate c{evaluate(static_cast<int>(i), scale), nonzero_ks[i], scale};
        if (c < best) best = c;
      }
    } else {
      // Greedy walk up the grid: accept while strictly improving on the
      // previous candidate, stop at the first failure.
      double previous = result.before_val.hard;
      for (std::size_t i = 0; i < nonzero_ks.size(); ++i) {
        const double metric = evaluate(static_cast<int>(i), scale);
        if (!(metric < previous)) break;
        previous = metric;
        const Candidate c{metric, nonzero_ks[i], scale};
        if (c < best) best = c;
      }
    }
  }

  if (best.k == 0) {
    store_scores(1.0);
    return finish_no_op(std::move(result), model);
  }

  const auto k_position =
      std::find(nonzero_ks.begin(), nonzero_ks.end(), best.k) - nonzero_ks.begin();
  ParamVector theta_fair =
      model.params + best.scale * edits.col(static_cast<Eigen::Index>(k_position));
  const MlpModel edited{model.arch, theta_fair};
  const MetricSnapshot after_val = snapshot(edited, val, cfg.metric);

  // The searched objective is the hard metric; make sure the smooth surrogate
  // did not regress either, otherwise treat the search as failed.
  if (after_val.surrogate > result.before_val.surrogate) {
    store_scores(1.0);
    return finish_no_op(std::move(result), model);
  }

  store_scores(best.scale);
  result.theta_fair = std::move(theta_fair);
  result.chosen_k = best.k;
  result.chosen_scale = best.scale;
  result.dropped.assign(candidates.begin(), candidates.begin() + best.k);
  result.after_val = after_val;
  if (test != nullptr) {
    result.after_test = snapshot(edited, *test, cfg.metric);
  }
  double dropped_score_sum = 0.0;
  for (int idx : result.dropped) dropped_score_sum += result.report.scores[idx];
  result.linearized_metric_delta = -dropped_score_sum;
  return result;
}

}  // namespace fairij
