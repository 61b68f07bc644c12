#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace fairij {

/// Flattened model parameters and any vector living in the same space
/// (per-instance gradients, IHVP results, parameter edits).
using ParamVector = Eigen::VectorXd;

enum class Activation { selu, relu, identity };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

/// Descriptor of the binary classifier family: a fully connected net with a
/// single output logit. An empty hidden_widths list is logistic regression.
struct MlpArchitecture {
  int input_dim = 1;
  std::vector<int> hidden_widths;
  Activation activation = Activation::selu;

  /// Total number of parameters D; pure function of the descriptor.
  int param_count() const;
  void validate() const;
  bool operator==(const MlpArchitecture&) const = default;
};

struct MlpModel {
  MlpArchitecture arch;
  ParamVector params;

  void validate() const;
};

/// Seeded uniform fan-in initialization: every weight and bias of a layer is
/// drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
ParamVector init_params(const MlpArchitecture& arch, std::uint64_t seed);

/// Sigmoid probability for one instance, clamped to [1e-12, 1 - 1e-12].
double forward(const MlpModel& model, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Probabilities for a batch; `inputs` holds one instance per column.
Eigen::VectorXd forward_batch(const MlpModel& model,
                              const Eigen::Ref<const Eigen::MatrixXd>& inputs);

/// Binary cross-entropy of one instance; finite for any parameters because
/// the probability is clamped away from 0 and 1.
double loss_instance(const MlpModel& model,
                     const Eigen::Ref<const Eigen::VectorXd>& x, int label);

/// Exact gradient of loss_instance with respect to all parameters.
ParamVector grad_instance(const MlpModel& model,
                          const Eigen::Ref<const Eigen::VectorXd>& x, int label);

/// Exact gradient of the output logit (pre-sigmoid) for one instance.
ParamVector grad_logit(const MlpModel& model,
                       const Eigen::Ref<const Eigen::VectorXd>& x);

/// Sum over the batch of weight_i * d(logit_i)/d(params). One backward pass;
/// the workhorse behind training batches and surrogate gradients.
ParamVector weighted_logit_grad(const MlpModel& model,
                                const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                                const Eigen::Ref<const Eigen::VectorXd>& weights);

/// Per-instance dot products d(logit_i)/d(params) . direction, without
/// materializing any per-instance gradient.
Eigen::VectorXd logit_grad_dots(const MlpModel& model,
                                const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                                const ParamVector& direction);

}  // namespace fairij
