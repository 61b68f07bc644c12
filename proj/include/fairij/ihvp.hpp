#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fairij/dataset.hpp"
#include "fairij/mlp.hpp"

namespace fairij {

enum class IhvpMethod { woodfisher, neumann, exact };

IhvpMethod ihvp_method_from_string(const std::string& name);
std::string to_string(IhvpMethod m);

struct IhvpConfig {
  IhvpMethod method = IhvpMethod::woodfisher;
  int iterations = 1000;         // B
  double damping = 1.0;          // lambda
  double neumann_scale = 25.0;   // must exceed the largest Hessian eigenvalue
  double wf_scale = 1.0;         // multiplies the returned product (any engine)
  std::uint64_t instance_order_seed = 0;
  int exact_dim_cap = 2000;

  void validate() const;
};

/// Ordered, re-iterable source of per-instance loss gradients. The
/// dataset-backed form visits training instances in a seeded shuffled order;
/// the synthetic form replays a fixed list (tests and toy problems).
class GradientStream {
 public:
  GradientStream(const MlpModel& model, const TabularDataset& train,
                 std::uint64_t order_seed);
  explicit GradientStream(std::vector<ParamVector> gradients);

  int size() const { return static_cast<int>(order_.size()); }
  const std::vector<int>& order() const { return order_; }
  ParamVector gradient(int position) const;

 private:
  const MlpModel* model_ = nullptr;
  const TabularDataset* train_ = nullptr;
  Eigen::VectorXd weights_;  // p_i - y_i per original instance index
  std::vector<ParamVector> synthetic_;
  std::vector<int> order_;
};

/// Gradient of a scalar objective at given parameters; seam that lets the
/// iterative engines run on synthetic problems with known Hessians.
using GradFn = std::function<ParamVector(const ParamVector&)>;

/// Streaming rank-one curvature estimate over the first B stream gradients:
/// starting from k_1 = v / damping, each step m computes o_m = H_{m-1}^{-1}
/// g_m exactly from the retained past directions and applies
///   k <- k - o_m (g_m'k) / (N + g_m'o_m),
/// with N the full stream length even when B < N, so that k_B equals
/// (damping*I + (1/N) sum g g')^{-1} v over the consumed gradients. Returns
/// wf_scale * k_B. Stores O(B * D) values.
ParamVector ihvp_woodfisher(const GradientStream& stream, const ParamVector& v,
                            const IhvpConfig& cfg);

/// Same recurrence solved for many right-hand sides at once; a single pass
/// over the gradient stream serves every column.
Eigen::MatrixXd ihvp_woodfisher_multi(const GradientStream& stream,
                                      const Eigen::MatrixXd& rhs,
                                      const IhvpConfig& cfg);

/// Truncated Neumann series u <- v + (I - H/scale) u for B steps, where Hu is
/// a central finite difference of the mean-loss gradient; returns the final
/// iterate divided by scale (times wf_scale).
ParamVector ihvp_neumann(const GradFn& grad, const ParamVector& theta,
                         const ParamVector& v, const IhvpConfig& cfg);
ParamVector ihvp_neumann(const MlpModel& model, const TabularDataset& train,
                         const ParamVector& v, const IhvpConfig& cfg);

/// Dense damped solve: the Hessian is assembled column-by-column by finite
/// differences of the gradient, symmetrized, shifted by damping * I, and
/// factored. Refuses parameter counts above cfg.exact_dim_cap.
ParamVector ihvp_exact(const GradFn& grad, const ParamVector& theta,
                       const ParamVector& v, const IhvpConfig& cfg);
ParamVector ihvp_exact(const MlpModel& model, const TabularDataset& train,
                       const ParamVector& v, const IhvpConfig& cfg);

/// Engine facade that dispatches on cfg.method and reuses expensive state
/// across solves (the exact factorization; the stream's cached predictions).
class IhvpSolver {
 public:
  IhvpSolver(const MlpModel& model, const TabularDataset& train, IhvpConfig cfg);
  ~IhvpSolver();
  IhvpSolver(const IhvpSolver&) = delete;
  IhvpSolver& operator=(const IhvpSolver&) = delete;

  const IhvpConfig& config() const { return cfg_; }
  ParamVector solve(const ParamVector& v) const;
  Eigen::MatrixXd solve_multi(const Eigen::MatrixXd& rhs) const;

 private:
  struct Impl;
  const MlpModel& model_;
  const TabularDataset& train_;
  IhvpConfig cfg_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace fairij
