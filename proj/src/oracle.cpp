#include "fairij/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "fairij/errors.hpp"
#include "fairij/influence.hpp"
#include "fairij/rng.hpp"

namespace fairij {

void OracleTrainConfig::validate() const {
  if (max_iterations < 1) throw InputError("max_iterations must be >= 1");
  if (!(tolerance > 0.0)) throw InputError("tolerance must be positive");
  if (l2 < 0.0) throw InputError("l2 must be non-negative");
  if (!(initial_step > 0.0)) throw InputError("initial_step must be positive");
}

MlpModel oracle_train(const TabularDataset& train, const MlpArchitecture& arch,
                      const OracleTrainConfig& cfg) {
  cfg.validate();
  arch.validate();
  train.validate();
  if (train.width() != arch.input_dim) {
    throw InputError("dataset width does not match architecture input_dim");
  }

  MlpModel model{arch, init_params(arch, cfg.seed)};
  auto objective = [&](const ParamVector& theta) {
    const MlpModel probe{arch, theta};
    return mean_loss(probe, train) + 0.5 * cfg.l2 * theta.squaredNorm();
  };

  double step = cfg.initial_step;
  for (int iteration = 0; iteration < cfg.max_iterations; ++iteration) {
    const ParamVector grad = mean_grad(model, train) + cfg.l2 * model.params;
    const double grad_norm = grad.norm();
    if (grad_norm <= cfg.tolerance) return model;

    const double value = objective(model.params);
    // Backtracking (Armijo) line search. The accepted step seeds the next
    // iteration's guess and may grow without bound: near a ridge-dominated
    // optimum the right step is ~1/l2, and capping it would freeze progress
    // below the resolution of the objective. The fairly strict decrease
    // constant damps zig-zagging when steps get that large.
    double t = 2.0 * step;
    const double slope = 0.1 * grad_norm * grad_norm;
    while (objective(model.params - t * grad) > value - t * slope) {
      t *= 0.5;
      if (t < 1e-14) {
        throw NumericError("oracle line search stalled at iteration " +
                           std::to_string(iteration) + " (gradient norm " +
                           std::to_string(grad_norm) + ")");
      }
    }
    model.params -= t * grad;
    step = t;
  }
  throw NumericError("oracle training did not reach tolerance " +
                     std::to_string(cfg.tolerance) + " within " +
                     std::to_string(cfg.max_iterations) + " iterations");
}

LooResult loo_retrain_influence(const TabularDataset& train,
                                const TabularDataset& val,
                                const MlpArchitecture& arch,
                                const OracleTrainConfig& cfg,
                                FairnessMetricKind kind,
                                const std::vector<int>& indices) {
  if (train.size() > 1000) {
    throw InputError("leave-one-out oracle capped at 1000 training instances");
  }
  if (indices.size() > 200) {
    throw InputError("leave-one-out oracle capped at 200 retrains");
  }

  for (int idx : indices) {
    if (idx < 0 || idx >= train.size()) {
      throw InputError("leave-one-out index " + std::to_string(idx) +
                       " out of range");
    }
  }

  LooResult result;
  if (indices.empty()) return result;

  const MlpModel base = oracle_train(train, arch, cfg);
  result.base_surrogate = surrogate(base, val, kind);
  result.base_loss = mean_loss(base, val);

  for (int idx : indices) {
    LooEntry entry;
    entry.index = idx;
    try {
      const MlpModel retrained = oracle_train(train.without({idx}), arch, cfg);
      entry.surrogate_delta = surrogate(retrained, val, kind) - result.base_surrogate;
      entry.loss_delta = mean_loss(retrained, val) - result.base_loss;
    } catch (const NumericError& e) {
      entry.ok = false;
      entry.error = e.what();
    }
    result.entries.push_back(std::move(entry));
  }
  return result;
}

double finite_diff_check(const std::function<double(const ParamVector&)>& f,
                         const ParamVector& grad, const ParamVector& point) {
  if (point.size() != grad.size()) {
    throw InputError("gradient length does not match point length");
  }
  if (point.size() > 5000) {
    throw InputError("finite_diff_check capped at 5000 coordinates");
  }
  if (point.size() == 0) return 0.0;
  ParamVector numeric(point.size());
  ParamVector probe = point;
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    const double eps = 1e-5 * (1.0 + std::abs(point[i]));
    probe[i] = point[i] + eps;
    const double plus = f(probe);
    probe[i] = point[i] - eps;
    const double minus = f(probe);
    probe[i] = point[i];
    numeric[i] = (plus - minus) / (2.0 * eps);
  }
  // Deviations are judged against the gradient's overall scale: a coordinate
  // five orders of magnitude below the dominant one is beneath what central
  // differencing at this step can resolve (the difference quotient carries
  // ~1e-11 of cancellation noise from an O(1) function), so a per-coordinate
  // ratio there would measure the probe, not the gradient.
  const double scale = std::max(
      {grad.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff(), 1e-8});
  return (grad - numeric).cwiseAbs().maxCoeff() / scale;
}

namespace {

double median_absolute(const Eigen::VectorXd& values) {
  std::vector<double> magnitudes(values.size());
  for (Eigen::Index i = 0; i < values.size(); ++i) magnitudes[i] = std::abs(values[i]);
  std::sort(magnitudes.begin(), magnitudes.end());
  const std::size_t n = magnitudes.size();
  if (n == 0) return 0.0;
  if (n % 2 == 1) return magnitudes[n / 2];
  return (magnitudes[n / 2 - 1] + magnitudes[n / 2]) / 2.0;
}

// Scale factor that puts `scores` on the reference's mean magnitude. Matching
// signed means instead would divide by a quantity that vanishes near a trained
// optimum (score means shrink with the mean training gradient), turning the
// factor into noise; magnitudes stay well away from zero.
double mean_match_factor(const Eigen::VectorXd& scores, double target_mean) {
  const double mean = scores.cwiseAbs().mean();
  if (mean < 1e-300) return 1.0;
  return target_mean / mean;
}

IhvpComparison compare_score_arrays(const std::string& method_a,
                                    const std::string& method_b,
                                    Eigen::VectorXd scores_a,
                                    Eigen::VectorXd scores_b) {
  IhvpComparison comparison;
  comparison.method_a = method_a;
  comparison.method_b = method_b;
  comparison.scores_a = std::move(scores_a);
  comparison.scores_b = std::move(scores_b);

  const double target = comparison.scores_b.cwiseAbs().mean();
  comparison.rescale_a = mean_match_factor(comparison.scores_a, target);
  comparison.rescale_b = mean_match_factor(comparison.scores_b, target);
  const Eigen::VectorXd a = comparison.rescale_a * comparison.scores_a;
  const Eigen::VectorXd b = comparison.rescale_b * comparison.scores_b;

  comparison.mad = median_absolute(a - b);
  const double ss_res = (a - b).squaredNorm();
  const double ss_tot = (b.array() - b.mean()).matrix().squaredNorm();
  if (ss_res <= 1e-300) {
    comparison.r_squared = 1.0;
  } else {
    comparison.r_squared = 1.0 - ss_res / std::max(ss_tot, 1e-300);
  }
  return comparison;
}

}  // namespace

IhvpComparison compare_ihvp(const MlpModel& model, const TabularDataset& train,
                            const TabularDataset& val, FairnessMetricKind kind,
                            const IhvpConfig& cfg_a, const IhvpConfig& cfg_b) {
  return compare_score_arrays(
      to_string(cfg_a.method), to_string(cfg_b.method),
      fairness_influence(model, train, val, kind, cfg_a).scores,
      fairness_influence(model, train, val, kind, cfg_b).scores);
}

IhvpComparison compare_ihvp_loss(const MlpModel& model,
                                 const TabularDataset& train,
                                 const TabularDataset& val,
                                 const IhvpConfig& cfg_a,
                                 const IhvpConfig& cfg_b) {
  return compare_score_arrays(to_string(cfg_a.method), to_string(cfg_b.method),
                              loss_influence(model, train, val, cfg_a),
                              loss_influence(model, train, val, cfg_b));
}

void MoonsStudyConfig::validate() const {
  if (n < 10) throw InputError("study n must be >= 10");
  if (runs < 1) throw InputError("study runs must be >= 1");
  if (width < 1) throw InputError("study width must be >= 1");
  if (depths.empty()) throw InputError("study depths must be non-empty");
  for (int d : depths) {
    if (d < 0) throw InputError("study depths must be non-negative");
  }
  if (iterations < 1) throw InputError("study iterations must be >= 1");
}

MoonsStudyOutcome run_moons_study(const MoonsStudyConfig& cfg) {
  cfg.validate();
  MoonsStudyOutcome outcome;

  for (int run = 0; run < cfg.runs; ++run) {
    const std::uint64_t run_seed = derive_seed(cfg.seed, 101 + run);
    const TabularDataset data =
        two_moons(cfg.n, cfg.noise, cfg.separation, run_seed);
    auto [train, val] = split_two(data, 0.8, derive_seed(run_seed, 1));

    for (int depth : cfg.depths) {
      MlpArchitecture arch;
      arch.input_dim = 2;
      arch.hidden_widths.assign(depth, cfg.width);
      // relu keeps the per-instance Hessians close to their gradient outer
      // products (its pointwise second derivative vanishes), which is the
      // regime where the streaming curvature estimate can track the dense one.
      arch.activation = Activation::relu;

      TrainConfig tcfg;
      tcfg.epochs = cfg.train_epochs;
      tcfg.batch_size = cfg.train_batch_size;
      tcfg.learning_rate = cfg.train_learning_rate;
      tcfg.optimizer = Optimizer::adam;
      tcfg.seed = derive_seed(run_seed, 1000 + depth);
      // Influence theory wants (approximate) train-loss stationarity, so the
      // study keeps the final iterate rather than a best-validation rollback.
      tcfg.checkpoint_selection = CheckpointSelection::last;
      const MlpModel model = train_erm(train, val, arch, tcfg).model;

      IhvpConfig exact_cfg;
      exact_cfg.method = IhvpMethod::exact;
      exact_cfg.damping = cfg.exact_damping;

      IhvpConfig wf_cfg;
      wf_cfg.method = IhvpMethod::woodfisher;
      wf_cfg.iterations = std::min<int>(cfg.iterations, static_cast<int>(train.size()));
      wf_cfg.damping = cfg.woodfisher_damping;
      wf_cfg.instance_order_seed = derive_seed(run_seed, 2000 + depth);

      IhvpConfig neumann_cfg;
      neumann_cfg.method = IhvpMethod::neumann;
      neumann_cfg.iterations = cfg.iterations;
      neumann_cfg.neumann_scale = cfg.neumann_scale;

      // The comparison target is the loss at one randomly drawn held-out
      // point, so the scores probe the solvers rather than any group metric.
      Rng picker(derive_seed(run_seed, 3000 + depth));
      const int last = static_cast<int>(val.size()) - 1;
      const int pick = std::min(
          static_cast<int>(picker.uniform() * static_cast<double>(val.size())),
          last);
      const TabularDataset probe = val.subset({pick});

      for (const IhvpConfig& approx_cfg : {wf_cfg, neumann_cfg}) {
        const IhvpComparison comparison =
            compare_ihvp_loss(model, train, probe, approx_cfg, exact_cfg);
        outcome.rows.push_back(MoonsStudyRow{depth, run,
                                             to_string(approx_cfg.method),
                                             comparison.mad,
                                             comparison.r_squared});
        if (cfg.keep_points) {
          const Eigen::VectorXd approx =
              comparison.rescale_a * comparison.scores_a;
          const Eigen::VectorXd exact =
              comparison.rescale_b * comparison.scores_b;
          for (Eigen::Index i = 0; i < exact.size(); ++i) {
            outcome.points.push_back(MoonsStudyPoint{
                depth, run, to_string(approx_cfg.method), exact[i], approx[i]});
          }
        }
      }
    }
  }
  return outcome;
}

}  // namespace fairij
