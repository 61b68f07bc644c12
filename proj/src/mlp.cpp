#include "fairij/mlp.hpp"

#include <cmath>
#include <utility>

#include "fairij/errors.hpp"
#include "fairij/rng.hpp"

namespace fairij {
namespace {

constexpr double kProbClamp = 1e-12;
constexpr double kSeluLambda = 1.0507009873554804934193349852946;
constexpr double kSeluAlpha = 1.6732632423543772848170429916717;

double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double clamp_prob(double p) {
  if (p < kProbClamp) return kProbClamp;
  if (p > 1.0 - kProbClamp) return 1.0 - kProbClamp;
  return p;
}

// Layer sizes including input and the single output logit.
std::vector<int> layer_dims(const MlpArchitecture& arch) {
  std::vector<int> dims;
  dims.push_back(arch.input_dim);
  for (int w : arch.hidden_widths) dims.push_back(w);
  dims.push_back(1);
  return dims;
}

struct LayerView {
  Eigen::Map<const Eigen::MatrixXd> weights;
  Eigen::Map<const Eigen::VectorXd> bias;
};

struct MutableLayerView {
  Eigen::Map<Eigen::MatrixXd> weights;
  Eigen::Map<Eigen::VectorXd> bias;
};

LayerView layer_at(const ParamVector& params, int offset, int in, int out) {
  return LayerView{
      Eigen::Map<const Eigen::MatrixXd>(params.data() + offset, out, in),
      Eigen::Map<const Eigen::VectorXd>(params.data() + offset + out * in, out)};
}

MutableLayerView layer_at(ParamVector& params, int offset, int in, int out) {
  return MutableLayerView{
      Eigen::Map<Eigen::MatrixXd>(params.data() + offset, out, in),
      Eigen::Map<Eigen::VectorXd>(params.data() + offset + out * in, out)};
}

Eigen::MatrixXd apply_activation(const Eigen::MatrixXd& z, Activation act) {
  switch (act) {
    case Activation::relu:
      return z.cwiseMax(0.0);
    case Activation::identity:
      return z;
    case Activation::selu:
      return z.unaryExpr([](double v) {
        return v > 0.0 ? kSeluLambda * v
                       : kSeluLambda * kSeluAlpha * (std::exp(v) - 1.0);
      });
  }
  return z;
}

Eigen::MatrixXd activation_derivative(const Eigen::MatrixXd& z, Activation act) {
  switch (act) {
    case Activation::relu:
      return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
    case Activation::identity:
      return Eigen::MatrixXd::Ones(z.rows(), z.cols());
    case Activation::selu:
      return z.unaryExpr([](double v) {
        return v > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(v);
      });
  }
  return Eigen::MatrixXd::Ones(z.rows(), z.cols());
}

void check_inputs(const MlpModel& model,
                  const Eigen::Ref<const Eigen::MatrixXd>& inputs) {
  if (inputs.rows() != model.arch.input_dim) {
    throw InputError("feature dimension " + std::to_string(inputs.rows()) +
                     " does not match architecture input_dim " +
                     std::to_string(model.arch.input_dim));
  }
  if (!inputs.allFinite()) {
    throw InputError("non-finite feature value");
  }
}

// Forward pass keeping pre-activations and activations for backprop.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> pre;   // Z_1 .. Z_L
  std::vector<Eigen::MatrixXd> act;   // A_0 .. A_{L-1} (A_0 = inputs)
  Eigen::RowVectorXd logits;          // Z_L as a row
};

ForwardTrace run_forward(const MlpModel& model,
                         const Eigen::Ref<const Eigen::MatrixXd>& inputs) {
  model.validate();
  check_inputs(model, inputs);
  const auto dims = layer_dims(model.arch);
  const int layers = static_cast<int>(dims.size()) - 1;

  ForwardTrace trace;
  trace.act.reserve(layers);
  trace.pre.reserve(layers);
  trace.act.push_back(inputs);
  int offset = 0;
  for (int l = 0; l < layers; ++l) {
    const auto view = layer_at(model.params, offset, dims[l], dims[l + 1]);
    Eigen::MatrixXd z = view.weights * trace.act.back();
    z.colwise() += view.bias;
    trace.pre.push_back(z);
    if (l + 1 < layers) {
      trace.act.push_back(apply_activation(z, model.arch.activation));
    }
    offset += dims[l + 1] * (dims[l] + 1);
  }
  trace.logits = trace.pre.back().row(0);
  return trace;
}

}  // namespace

Activation activation_from_string(const std::string& name) {
  if (name == "selu") return Activation::selu;
  if (name == "relu") return Activation::relu;
  if (name == "identity") return Activation::identity;
  throw InputError("unknown activation '" + name + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::selu: return "selu";
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
  }
  return "selu";
}

int MlpArchitecture::param_count() const {
  const auto dims = layer_dims(*this);
  int count = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    count += dims[l + 1] * (dims[l] + 1);
  }
  return count;
}

void MlpArchitecture::validate() const {
  if (input_dim < 1) throw InputError("input_dim must be >= 1");
  for (int w : hidden_widths) {
    if (w < 1) throw InputError("hidden widths must be >= 1");
  }
}

void MlpModel::validate() const {
  arch.validate();
  if (params.size() != arch.param_count()) {
    throw InputError("parameter vector length " + std::to_string(params.size()) +
                     " does not match architecture parameter count " +
                     std::to_string(arch.param_count()));
  }
}

ParamVector init_params(const MlpArchitecture& arch, std::uint64_t seed) {
  arch.validate();
  const auto dims = layer_dims(arch);
  ParamVector params(arch.param_count());
  Rng rng(derive_seed(seed, 0x1717));
  int offset = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    const int block = dims[l + 1] * (dims[l] + 1);
    for (int i = 0; i < block; ++i) {
      params[offset + i] = rng.uniform(-bound, bound);
    }
    offset += block;
  }
  return params;
}

double forward(const MlpModel& model,
               const Eigen::Ref<const Eigen::VectorXd>& x) {
  const auto trace = run_forward(model, x);
  return clamp_prob(sigmoid(trace.logits[0]));
}

Eigen::VectorXd forward_batch(const MlpModel& model,
                              const Eigen::Ref<const Eigen::MatrixXd>& inputs) {
  const auto trace = run_forward(model, inputs);
  Eigen::VectorXd probs(inputs.cols());
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    probs[i] = clamp_prob(sigmoid(trace.logits[i]));
  }
  return probs;
}

double loss_instance(const MlpModel& model,
                     const Eigen::Ref<const Eigen::VectorXd>& x, int label) {
  if (label != 0 && label != 1) {
    throw InputError("label must be 0 or 1, got " + std::to_string(label));
  }
  const double p = forward(model, x);
  return label == 1 ? -std::log(p) : -std::log(1.0 - p);
}

ParamVector weighted_logit_grad(const MlpModel& model,
                                const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                                const Eigen::Ref<const Eigen::VectorXd>& weights) {
  if (weights.size() != inputs.cols()) {
    throw InputError("weight count does not match batch size");
  }
  const auto trace = run_forward(model, inputs);
  const auto dims = layer_dims(model.arch);
  const int layers = static_cast<int>(dims.size()) - 1;

  ParamVector grad = ParamVector::Zero(model.params.size());
  std::vector<int> offsets(layers);
  int offset = 0;
  for (int l = 0; l < layers; ++l) {
    offsets[l] = offset;
    offset += dims[l + 1] * (dims[l] + 1);
  }

  Eigen::MatrixXd delta = weights.transpose();  // 1 x B at the logit
  for (int l = layers - 1; l >= 0; --l) {
    auto slot = layer_at(grad, offsets[l], dims[l], dims[l + 1]);
    slot.weights.noalias() = delta * trace.act[l].transpose();
    slot.bias = delta.rowwise().sum();
    if (l > 0) {
      const auto view = layer_at(model.params, offsets[l], dims[l], dims[l + 1]);
      delta = (view.weights.transpose() * delta)
                  .cwiseProduct(activation_derivative(trace.pre[l - 1],
                                                      model.arch.activation));
    }
  }
  return grad;
}

ParamVector grad_instance(const MlpModel& model,
                          const Eigen::Ref<const Eigen::VectorXd>& x, int label) {
  if (label != 0 && label != 1) {
    throw InputError("label must be 0 or 1, got " + std::to_string(label));
  }
  const double p = forward(model, x);
  Eigen::VectorXd weight(1);
  weight[0] = p - static_cast<double>(label);
  return weighted_logit_grad(model, x, weight);
}

ParamVector grad_logit(const MlpModel& model,
                       const Eigen::Ref<const Eigen::VectorXd>& x) {
  Eigen::VectorXd weight(1);
  weight[0] = 1.0;
  return weighted_logit_grad(model, x, weight);
}

Eigen::VectorXd logit_grad_dots(const MlpModel& model,
                                const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                                const ParamVector& direction) {
  if (direction.size() != model.params.size()) {
    throw InputError("direction length does not match parameter count");
  }
  const auto trace = run_forward(model, inputs);
  const auto dims = layer_dims(model.arch);
  const int layers = static_cast<int>(dims.size()) - 1;
  const Eigen::Index batch = inputs.cols();

  std::vector<int> offsets(layers);
  int offset = 0;
  for (int l = 0; l < layers; ++l) {
    offsets[l] = offset;
    offset += dims[l + 1] * (dims[l] + 1);
  }

  Eigen::RowVectorXd dots = Eigen::RowVectorXd::Zero(batch);
  Eigen::MatrixXd delta = Eigen::MatrixXd::Ones(1, batch);
  for (int l = layers - 1; l >= 0; --l) {
    const auto dir = layer_at(direction, offsets[l], dims[l], dims[l + 1]);
    // Per-instance contribution: delta_i . (dW * a_i + db).
    dots += (dir.weights * trace.act[l]).cwiseProduct(delta).colwise().sum();
    dots += dir.bias.transpose() * delta;
    if (l > 0) {
      const auto view = layer_at(model.params, offsets[l], dims[l], dims[l + 1]);
      delta = (view.weights.transpose() * delta)
                  .cwiseProduct(activation_derivative(trace.pre[l - 1],
                                                      model.arch.activation));
    }
  }
  return dots.transpose();
}

}  // namespace fairij
