#include "fairij/ihvp.hpp"

#include <Eigen/Cholesky>
#include <cmath>

#include "fairij/errors.hpp"
#include "fairij/rng.hpp"
#include "fairij/train.hpp"

namespace fairij {

IhvpMethod ihvp_method_from_string(const std::string& name) {
  if (name == "woodfisher") return IhvpMethod::woodfisher;
  if (name == "neumann") return IhvpMethod::neumann;
  if (name == "exact") return IhvpMethod::exact;
  throw InputError("unknown ihvp method '" + name + "'");
}

std::string to_string(IhvpMethod m) {
  switch (m) {
    case IhvpMethod::woodfisher: return "woodfisher";
    case IhvpMethod::neumann: return "neumann";
    case IhvpMethod::exact: return "exact";
  }
  return "woodfisher";
}

void IhvpConfig::validate() const {
  if (iterations < 1) throw InputError("ihvp iterations must be >= 1");
  if (damping < 0.0) throw InputError("ihvp damping must be non-negative");
  if (method == IhvpMethod::woodfisher && !(damping > 0.0)) {
    throw InputError("woodfisher requires positive damping");
  }
  if (!(neumann_scale > 0.0)) throw InputError("neumann_scale must be positive");
  if (!(wf_scale > 0.0)) throw InputError("wf_scale must be positive");
  if (exact_dim_cap < 1) throw InputError("exact_dim_cap must be >= 1");
}

GradientStream::GradientStream(const MlpModel& model, const TabularDataset& train,
                               std::uint64_t order_seed)
    : model_(&model), train_(&train) {
  model.validate();
  train.validate();
  const Eigen::VectorXd probs = forward_batch(model, train.inputs());
  weights_ = probs - train.labels_vector();
  order_.resize(train.size());
  for (int i = 0; i < static_cast<int>(order_.size()); ++i) order_[i] = i;
  Rng rng(order_seed);
  rng.shuffle(order_);
}

GradientStream::GradientStream(std::vector<ParamVector> gradients)
    : synthetic_(std::move(gradients)) {
  if (synthetic_.empty()) throw InputError("gradient stream must be non-empty");
  for (const auto& g : synthetic_) {
    if (g.size() != synthetic_.front().size()) {
      throw InputError("gradient stream entries must share one length");
    }
  }
  order_.resize(synthetic_.size());
  for (int i = 0; i < static_cast<int>(order_.size()); ++i) order_[i] = i;
}

ParamVector GradientStream::gradient(int position) const {
  if (position < 0 || position >= size()) {
    throw InputError("gradient stream position out of range");
  }
  if (!synthetic_.empty()) return synthetic_[order_[position]];
  const int idx = order_[position];
  Eigen::VectorXd weight(1);
  weight[0] = weights_[idx];
  return weighted_logit_grad(*model_, train_->features.row(idx).transpose(), weight);
}

Eigen::MatrixXd ihvp_woodfisher_multi(const GradientStream& stream,
                                      const Eigen::MatrixXd& rhs,
                                      const IhvpConfig& cfg) {
  cfg.validate();
  if (cfg.method != IhvpMethod::woodfisher) {
    throw InputError("ihvp_woodfisher called with a non-woodfisher config");
  }
  const int n = stream.size();
  if (cfg.iterations > n) {
    throw InputError("woodfisher iterations (" + std::to_string(cfg.iterations) +
                     ") exceed stream length (" + std::to_string(n) + ")");
  }
  const double population = static_cast<double>(n);

  if (stream.gradient(0).size() != rhs.rows()) {
    throw InputError("right-hand side length does not match gradient length");
  }

  // Each step folds one gradient outer product into the running curvature
  // estimate H_m = damping*I + (1/N) * sum_{j<=m} g_j g_j^T and applies the
  // rank-one inverse update to k. The update direction o_m = H_{m-1}^{-1} g_m
  // is rebuilt exactly from the retained past directions, because H_{m-1}^{-1}
  // = damping^{-1} I - sum_{j<m} o_j o_j^T / d_j; reusing a stale direction
  // instead would collapse every correction onto the first gradient and leave
  // the estimate rank-one. Costs O(iterations * D) memory.
  std::vector<ParamVector> directions;
  std::vector<double> denominators;
  directions.reserve(static_cast<size_t>(std::max(0, cfg.iterations - 1)));
  denominators.reserve(directions.capacity());

  Eigen::MatrixXd k = rhs / cfg.damping;
  for (int step = 1; step < cfg.iterations; ++step) {
    const ParamVector g = stream.gradient(step);
    ParamVector o = g / cfg.damping;
    for (std::size_t j = 0; j < directions.size(); ++j) {
      o.noalias() -= directions[j] * (directions[j].dot(g) / denominators[j]);
    }
    const double g_dot_o = g.dot(o);
    const double denominator = population + g_dot_o;
    if (std::abs(denominator) <= 1e-12) {
      throw NumericError("woodfisher recurrence broke down at step " +
                         std::to_string(step) + ": denominator " +
                         std::to_string(denominator));
    }
    k.noalias() -= o * ((g.transpose() * k) / denominator);
    directions.push_back(std::move(o));
    denominators.push_back(denominator);
  }
  return cfg.wf_scale * k;
}

ParamVector ihvp_woodfisher(const GradientStream& stream, const ParamVector& v,
                            const IhvpConfig& cfg) {
  return ihvp_woodfisher_multi(stream, v, cfg);
}

namespace {

// Hessian-vector product by central differences of the gradient function.
ParamVector hvp(const GradFn& grad, const ParamVector& theta,
                const ParamVector& u) {
  const double eps = 1e-4 * (1.0 + theta.norm()) / (u.norm() + 1e-12);
  const ParamVector plus = grad(theta + eps * u);
  const ParamVector minus = grad(theta - eps * u);
  return (plus - minus) / (2.0 * eps);
}

GradFn dataset_grad_fn(const MlpModel& model, const TabularDataset& train) {
  return [&model, &train](const ParamVector& theta) {
    MlpModel shifted{model.arch, theta};
    return mean_grad(shifted, train);
  };
}

}  // namespace

ParamVector ihvp_neumann(const GradFn& grad, const ParamVector& theta,
                         const ParamVector& v, const IhvpConfig& cfg) {
  cfg.validate();
  if (cfg.method != IhvpMethod::neumann) {
    throw InputError("ihvp_neumann called with a non-neumann config");
  }
  const double v_norm = v.norm();
  ParamVector u = v;
  for (int step = 1; step <= cfg.iterations; ++step) {
    u = v + u - hvp(grad, theta, u) / cfg.neumann_scale;
    if (u.norm() > 1e8 * v_norm) {
      throw NumericError(
          "neumann iteration diverged at step " + std::to_string(step) +
          " (Hessian eigenvalues likely outside [0, scale])");
    }
  }
  return cfg.wf_scale * u / cfg.neumann_scale;
}

ParamVector ihvp_neumann(const MlpModel& model, const TabularDataset& train,
                         const ParamVector& v, const IhvpConfig& cfg) {
  model.validate();
  return ihvp_neumann(dataset_grad_fn(model, train), model.params, v, cfg);
}

namespace {

Eigen::MatrixXd dense_damped_hessian(const GradFn& grad, const ParamVector& theta,
                                     const IhvpConfig& cfg) {
  const Eigen::Index dim = theta.size();
  if (dim > cfg.exact_dim_cap) {
    throw InputError("exact ihvp refused: dimension " + std::to_string(dim) +
                     " exceeds cap " + std::to_string(cfg.exact_dim_cap));
  }
  Eigen::MatrixXd hessian(dim, dim);
  ParamVector probe = theta;
  for (Eigen::Index i = 0; i < dim; ++i) {
    const double eps = 1e-5 * (1.0 + std::abs(theta[i]));
    probe[i] = theta[i] + eps;
    const ParamVector plus = grad(probe);
    probe[i] = theta[i] - eps;
    const ParamVector minus = grad(probe);
    probe[i] = theta[i];
    hessian.col(i) = (plus - minus) / (2.0 * eps);
  }
  hessian = ((hessian + hessian.transpose()) / 2.0).eval();
  hessian.diagonal().array() += cfg.damping;
  return hessian;
}

ParamVector solve_damped(const Eigen::MatrixXd& damped, const ParamVector& v) {
  const Eigen::LDLT<Eigen::MatrixXd> factor(damped);
  if (factor.info() != Eigen::Success) {
    throw NumericError("damped Hessian factorization failed");
  }
  const ParamVector x = factor.solve(v);
  const double residual = (damped * x - v).norm();
  if (!(residual <= 1e-6 * std::max(1.0, v.norm()))) {
    throw NumericError("damped Hessian solve failed: residual " +
                       std::to_string(residual));
  }
  return x;
}

}  // namespace

ParamVector ihvp_exact(const GradFn& grad, const ParamVector& theta,
                       const ParamVector& v, const IhvpConfig& cfg) {
  cfg.validate();
  if (cfg.method != IhvpMethod::exact) {
    throw InputError("ihvp_exact called with a non-exact config");
  }
  return cfg.wf_scale * solve_damped(dense_damped_hessian(grad, theta, cfg), v);
}

ParamVector ihvp_exact(const MlpModel& model, const TabularDataset& train,
                       const ParamVector& v, const IhvpConfig& cfg) {
  model.validate();
  return ihvp_exact(dataset_grad_fn(model, train), model.params, v, cfg);
}

struct IhvpSolver::Impl {
  std::optional<GradientStream> stream;
  std::optional<Eigen::MatrixXd> damped;   // exact engine, built lazily
  std::optional<Eigen::LDLT<Eigen::MatrixXd>> factor;
};

IhvpSolver::IhvpSolver(const MlpModel& model, const TabularDataset& train,
                       IhvpConfig cfg)
    : model_(model), train_(train), cfg_(cfg), impl_(new Impl) {
  cfg_.validate();
  model.validate();
  train.validate();
}

IhvpSolver::~IhvpSolver() = default;

Eigen::MatrixXd IhvpSolver::solve_multi(const Eigen::MatrixXd& rhs) const {
  switch (cfg_.method) {
    case IhvpMethod::woodfisher: {
      if (!impl_->stream) {
        impl_->stream.emplace(model_, train_, cfg_.instance_order_seed);
      }
      IhvpConfig cfg = cfg_;
      cfg.iterations = std::min(cfg.iterations, impl_->stream->size());
      return ihvp_woodfisher_multi(*impl_->stream, rhs, cfg);
    }
    case IhvpMethod::neumann: {
      Eigen::MatrixXd out(rhs.rows(), rhs.cols());
      for (Eigen::Index c = 0; c < rhs.cols(); ++c) {
        out.col(c) = ihvp_neumann(model_, train_, rhs.col(c), cfg_);
      }
      return out;
    }
    case IhvpMethod::exact: {
      if (!impl_->factor) {
        impl_->damped =
            dense_damped_hessian(dataset_grad_fn(model_, train_), model_.params, cfg_);
        impl_->factor.emplace(*impl_->damped);
        if (impl_->factor->info() != Eigen::Success) {
          throw NumericError("damped Hessian factorization failed");
        }
      }
      Eigen::MatrixXd out(rhs.rows(), rhs.cols());
      for (Eigen::Index c = 0; c < rhs.cols(); ++c) {
        const ParamVector x = impl_->factor->solve(rhs.col(c));
        const double residual = (*impl_->damped * x - rhs.col(c)).norm();
        if (!(residual <= 1e-6 * std::max(1.0, rhs.col(c).norm()))) {
          throw NumericError("damped Hessian solve failed: residual " +
                             std::to_string(residual));
        }
        out.col(c) = cfg_.wf_scale * x;
      }
      return out;
    }
  }
  throw InputError("unknown ihvp method");
}

ParamVector IhvpSolver::solve(const ParamVector& v) const {
  return solve_multi(v);
}

}  // namespace fairij
