#ifndef DRIFTBENCH_NN_HPP
#define DRIFTBENCH_NN_HPP

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "driftbench/rng.hpp"

namespace driftbench::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct DenseLayer {
    Matrix weight;  // out x in
    Vector bias;    // out
};

/// One tensor pair per layer. Used for gradients, optimizer velocity, and
/// per-parameter importance, always shape-congruent with a Network.
using ParamTensors = std::vector<DenseLayer>;
using GradientSet = ParamTensors;

enum class Mode { Train, Eval };

struct Architecture {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden{64, 64, 64, 64};
    double dropout_rate = 0.25;
    // Dropout is applied to the output of this hidden layer (0-based), so the
    // default of 1 sits between the second and the third hidden layer.
    std::size_t dropout_after = 1;
};

/// Feedforward rectifier classifier. The last layer produces logits over the
/// currently registered classes; it may have zero rows before the first task.
struct Network {
    std::vector<DenseLayer> layers;
    double dropout_rate = 0.0;
    std::optional<std::size_t> dropout_after;

    std::size_t input_dim() const;
    std::size_t output_dim() const;
    std::size_t hidden_count() const { return layers.empty() ? 0 : layers.size() - 1; }
    std::size_t feature_dim() const;
    std::size_t parameter_count() const;

    /// Throws std::invalid_argument when layer shapes do not chain or the
    /// dropout configuration does not address an existing hidden layer.
    void validate() const;

    bool operator==(const Network& other) const;
};

/// He-initialised hidden layers and an empty output layer.
Network make_network(const Architecture& arch, Rng& rng);

/// Activations kept for backprop. Columns are samples.
struct ForwardTrace {
    std::vector<Matrix> pre;  // pre[i]: pre-activation of layer i
    std::vector<Matrix> act;  // act[i]: input fed to layer i (act[0] = inputs)
    std::optional<Matrix> dropout_mask;  // scaled by 1/(1-rate); absent in eval mode

    const Matrix& logits() const { return pre.back(); }
    const Matrix& penultimate() const { return act.back(); }
};

ForwardTrace forward(const Network& net, const Matrix& inputs, Mode mode, Rng& rng);
ForwardTrace forward(const Network& net, const Matrix& inputs);  // eval mode
ForwardTrace forward_with_mask(const Network& net, const Matrix& inputs, const Matrix& mask);

/// Inverted-dropout mask for `columns` samples at the network's dropout
/// position. All ones (no scaling) when the network has no active dropout.
Matrix sample_dropout_mask(const Network& net, Eigen::Index columns, Rng& rng);

Vector logits(const Network& net, const Vector& x);
Vector features(const Network& net, const Vector& x);
Matrix features(const Network& net, const Matrix& inputs);

/// Gradients summed over the batch columns of `dlogits`.
GradientSet backward(const Network& net, const ForwardTrace& trace, const Matrix& dlogits);

GradientSet zeros_like(const Network& net);
ParamTensors parameters_of(const Network& net);

struct LossGrad {
    double loss = 0.0;
    Vector grad;
};

Vector softmax(const Vector& logits);

/// Categorical cross-entropy over every registered class.
LossGrad classification_loss(const Vector& logits, std::size_t label);

/// Standard logistic 1 / (1 + exp(-x)).
double sigmoid(double x);

/// Binary cross-entropy of the new model's sigmoid outputs against the old
/// model's sigmoid outputs, summed over the old classes only. Entries of the
/// gradient for classes beyond old_logits.size() are zero.
LossGrad distillation_loss(const Vector& old_logits, const Vector& new_logits);

struct BatchLoss {
    double loss = 0.0;
    GradientSet grads;
};

/// Mean over the batch of classification loss plus gamma times the
/// distillation loss against `previous` (skipped when null). Dropout masks are
/// drawn from `rng`; the previous model always runs in eval mode.
BatchLoss total_loss_and_grads(const Network& net, const Network* previous, const Matrix& inputs,
                               std::span<const std::size_t> labels, double gamma, Rng& rng);

struct OptimizerState {
    GradientSet velocity;
    double learning_rate = 5e-4;
    double momentum = 0.9;
};

OptimizerState make_optimizer(const Network& net, double learning_rate, double momentum);

/// Nesterov momentum in the look-ahead reformulation:
///   v' = mu v - lr g,  theta' = theta - mu v + (1 + mu) v'
void sgd_nesterov_step(Network& net, const GradientSet& grads, OptimizerState& state);

/// Appends n_new output rows drawn from N(0, 0.01^2) with zero bias. Existing
/// parameters are copied untouched.
Network expand_output(const Network& net, std::size_t n_new, Rng& rng);

}  // namespace driftbench::nn

#endif  // DRIFTBENCH_NN_HPP
