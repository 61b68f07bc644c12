#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "fairij/dataset.hpp"
#include "fairij/errors.hpp"
#include "fairij/oracle.hpp"
#include "fairij/train.hpp"

using namespace fairij;

namespace {

MlpArchitecture logistic_arch() {
  MlpArchitecture arch;
  arch.input_dim = 2;
  arch.activation = Activation::identity;
  return arch;
}

}  // namespace

TEST_CASE("the oracle trainer drives the ridge objective gradient to zero") {
  TabularDataset train = biased_mixture(40, 0.2, 41);
  OracleTrainConfig cfg;
  cfg.l2 = 1e-3;
  cfg.seed = 42;

  MlpModel model = oracle_train(train, logistic_arch(), cfg);
  ParamVector objective_grad = mean_grad(model, train) + cfg.l2 * model.params;
  CHECK(objective_grad.norm() <= 1e-6);

  // Deterministic: a second run lands on bitwise-identical parameters.
  MlpModel again = oracle_train(train, logistic_arch(), cfg);
  CHECK((again.params.array() == model.params.array()).all());
}

TEST_CASE("oracle trainer configs are validated") {
  OracleTrainConfig cfg;
  cfg.max_iterations = 0;
  CHECK_THROWS_AS(cfg.validate(), InputError);

  cfg = OracleTrainConfig{};
  cfg.tolerance = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InputError);

  cfg = OracleTrainConfig{};
  cfg.l2 = -1.0;
  CHECK_THROWS_AS(cfg.validate(), InputError);

  cfg = OracleTrainConfig{};
  cfg.initial_step = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InputError);
}

TEST_CASE("the finite-difference checker is exact on linear functions") {
  ParamVector c(3);
  c << 0.5, -1.25, 2.0;
  auto f = [&](const ParamVector& theta) { return c.dot(theta); };
  ParamVector point(3);
  point << 0.3, 0.0, -0.7;

  CHECK(finite_diff_check(f, c, point) <= 1e-9);

  // A doubled gradient must register as roughly 50% relative error.
  ParamVector wrong = 2.0 * c;
  CHECK(finite_diff_check(f, wrong, point) > 0.4);

  ParamVector short_grad(2);
  short_grad << 1.0, 1.0;
  CHECK_THROWS_AS(finite_diff_check(f, short_grad, point), InputError);
}

TEST_CASE("leave-one-out retraining handles duplicates and empty requests") {
  TabularDataset train = biased_mixture(30, 0.2, 51);
  // Clone row 4 into row 11 so removing either leaves the same multiset.
  train.features.row(11) = train.features.row(4);
  train.labels[11] = train.labels[4];
  train.sensitive[11] = train.sensitive[4];
  TabularDataset val = biased_mixture(20, 0.2, 52);

  OracleTrainConfig cfg;
  cfg.l2 = 1e-3;
  cfg.seed = 53;

  LooResult empty =
      loo_retrain_influence(train, val, logistic_arch(), cfg,
                            FairnessMetricKind::dp, {});
  CHECK(empty.entries.empty());
  CHECK(std::isfinite(empty.base_surrogate));
  CHECK(std::isfinite(empty.base_loss));

  LooResult result =
      loo_retrain_influence(train, val, logistic_arch(), cfg,
                            FairnessMetricKind::dp, {4, 11});
  REQUIRE(result.entries.size() == 2);
  CHECK(result.entries[0].ok);
  CHECK(result.entries[1].ok);
  CHECK(result.entries[0].index == 4);
  CHECK(result.entries[1].index == 11);
  // Same leave-out multiset, so the two deltas agree up to summation order.
  CHECK(result.entries[0].surrogate_delta ==
        doctest::Approx(result.entries[1].surrogate_delta).epsilon(1e-6));
  CHECK(result.entries[0].loss_delta ==
        doctest::Approx(result.entries[1].loss_delta).epsilon(1e-6));
}

TEST_CASE("leave-one-out retraining enforces its size caps") {
  TabularDataset small = biased_mixture(30, 0.2, 61);
  TabularDataset val = biased_mixture(10, 0.2, 62);
  OracleTrainConfig cfg;

  TabularDataset big = biased_mixture(1002, 0.2, 63);
  CHECK_THROWS_AS(loo_retrain_influence(big, val, logistic_arch(), cfg,
                                        FairnessMetricKind::dp, {0}),
                  InputError);

  std::vector<int> many(201);
  std::iota(many.begin(), many.end(), 0);
  CHECK_THROWS_AS(loo_retrain_influence(small, val, logistic_arch(), cfg,
                                        FairnessMetricKind::dp, many),
                  InputError);

  CHECK_THROWS_AS(loo_retrain_influence(small, val, logistic_arch(), cfg,
                                        FairnessMetricKind::dp, {30}),
                  InputError);
}

TEST_CASE("comparing an engine against itself is a perfect match") {
  TabularDataset train = biased_mixture(40, 0.3, 71);
  TabularDataset val = biased_mixture(20, 0.3, 72);
  MlpArchitecture arch = logistic_arch();
  MlpModel model{arch, init_params(arch, 73)};

  IhvpConfig cfg;
  cfg.method = IhvpMethod::exact;
  cfg.damping = 0.5;
  IhvpComparison cmp =
      compare_ihvp(model, train, val, FairnessMetricKind::dp, cfg, cfg);
  CHECK(cmp.method_a == "exact");
  CHECK(cmp.method_b == "exact");
  CHECK(cmp.scores_a.size() == 40);
  CHECK(cmp.mad <= 1e-12);
  CHECK(cmp.r_squared == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("the accuracy study emits one row per engine and point per instance") {
  MoonsStudyConfig cfg;
  cfg.n = 200;
  cfg.runs = 1;
  cfg.depths = {1};
  cfg.width = 3;
  cfg.train_epochs = 5;
  cfg.iterations = 50;
  cfg.keep_points = true;
  cfg.seed = 81;

  MoonsStudyOutcome outcome = run_moons_study(cfg);
  REQUIRE(outcome.rows.size() == 2);   // woodfisher and neumann
  CHECK(outcome.rows[0].method == "woodfisher");
  CHECK(outcome.rows[1].method == "neumann");
  for (const auto& row : outcome.rows) {
    CHECK(std::isfinite(row.mad));
    CHECK(std::isfinite(row.r_squared));
    CHECK(row.depth == 1);
    CHECK(row.run == 0);
  }
  // 160 training instances per engine after the 80/20 split.
  CHECK(outcome.points.size() == 320);

  cfg.keep_points = false;
  MoonsStudyOutcome lean = run_moons_study(cfg);
  CHECK(lean.points.empty());
  REQUIRE(lean.rows.size() == 2);
  // The study itself is deterministic under a fixed seed.
  CHECK(lean.rows[0].r_squared == outcome.rows[0].r_squared);

  cfg.depths.clear();
  CHECK_THROWS_AS(run_moons_study(cfg), InputError);
}
