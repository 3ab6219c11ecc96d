#include "driftbench/nn.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace driftbench::nn {

namespace {

void require(bool condition, const std::string& message) {
    if (!condition) {
        throw std::invalid_argument(message);
    }
}

void check_congruent(const Network& net, const ParamTensors& tensors, const char* what) {
    require(tensors.size() == net.layers.size(), std::string(what) + ": layer count mismatch");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        require(tensors[i].weight.rows() == net.layers[i].weight.rows() &&
                    tensors[i].weight.cols() == net.layers[i].weight.cols() &&
                    tensors[i].bias.size() == net.layers[i].bias.size(),
                std::string(what) + ": shape mismatch at layer " + std::to_string(i));
    }
}

bool dropout_active(const Network& net) {
    return net.dropout_after.has_value() && net.dropout_rate > 0.0;
}

ForwardTrace run_forward(const Network& net, const Matrix& inputs, const Matrix* mask) {
    require(!net.layers.empty(), "forward: network has no layers");
    require(inputs.rows() == static_cast<Eigen::Index>(net.input_dim()),
            "forward: input dimension " + std::to_string(inputs.rows()) + " != " +
                std::to_string(net.input_dim()));
    const std::size_t n_layers = net.layers.size();
    ForwardTrace trace;
    trace.pre.reserve(n_layers);
    trace.act.reserve(n_layers);
    trace.act.push_back(inputs);
    for (std::size_t i = 0; i < n_layers; ++i) {
        const DenseLayer& layer = net.layers[i];
        Matrix z = layer.weight * trace.act.back();
        z.colwise() += layer.bias;
        trace.pre.push_back(std::move(z));
        if (i + 1 == n_layers) {
            break;
        }
        Matrix a = trace.pre.back().cwiseMax(0.0);
        if (mask != nullptr && net.dropout_after == i) {
            require(mask->rows() == a.rows() && mask->cols() == a.cols(),
                    "forward: dropout mask shape mismatch");
            a.array() *= mask->array();
            trace.dropout_mask = *mask;
        }
        trace.act.push_back(std::move(a));
    }
    return trace;
}

void init_gaussian(Matrix& m, double sd, Rng& rng) {
    std::normal_distribution<double> normal(0.0, sd);
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            m(r, c) = normal(rng);
        }
    }
}

// log(1 + exp(x)) without overflow
double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace

std::size_t Network::input_dim() const {
    return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weight.cols());
}

std::size_t Network::output_dim() const {
    return layers.empty() ? 0 : static_cast<std::size_t>(layers.back().weight.rows());
}

std::size_t Network::feature_dim() const {
    return layers.empty() ? 0 : static_cast<std::size_t>(layers.back().weight.cols());
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers) {
        n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
    }
    return n;
}

void Network::validate() const {
    require(!layers.empty(), "network has no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        require(layers[i].bias.size() == layers[i].weight.rows(),
                "bias length does not match weight rows at layer " + std::to_string(i));
        if (i > 0) {
            require(layers[i].weight.cols() == layers[i - 1].weight.rows(),
                    "layer " + std::to_string(i) + " input does not chain with previous output");
        }
    }
    require(dropout_rate >= 0.0 && dropout_rate < 1.0, "dropout rate must lie in [0, 1)");
    if (dropout_after) {
        require(*dropout_after < hidden_count(), "dropout position does not address a hidden layer");
    } else {
        require(dropout_rate == 0.0, "dropout rate set without a dropout position");
    }
}

bool Network::operator==(const Network& other) const {
    if (layers.size() != other.layers.size() || dropout_rate != other.dropout_rate ||
        dropout_after != other.dropout_after) {
        return false;
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& a = layers[i];
        const auto& b = other.layers[i];
        if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() ||
            a.bias.size() != b.bias.size() || a.weight != b.weight || a.bias != b.bias) {
            return false;
        }
    }
    return true;
}

Network make_network(const Architecture& arch, Rng& rng) {
    require(arch.input_dim > 0, "architecture: input dimension must be positive");
    Network net;
    std::size_t fan_in = arch.input_dim;
    for (const std::size_t width : arch.hidden) {
        require(width > 0, "architecture: hidden width must be positive");
        DenseLayer layer{Matrix(width, fan_in), Vector::Zero(width)};
        init_gaussian(layer.weight, std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
        net.layers.push_back(std::move(layer));
        fan_in = width;
    }
    net.layers.push_back(DenseLayer{Matrix(0, fan_in), Vector(0)});
    if (!arch.hidden.empty() && arch.dropout_rate > 0.0) {
        net.dropout_rate = arch.dropout_rate;
        net.dropout_after = arch.dropout_after;
    }
    net.validate();
    return net;
}

Matrix sample_dropout_mask(const Network& net, Eigen::Index columns, Rng& rng) {
    if (!net.dropout_after) {
        return Matrix();
    }
    const auto rows = net.layers[*net.dropout_after].weight.rows();
    if (!dropout_active(net)) {
        return Matrix::Ones(rows, columns);
    }
    const double keep = 1.0 - net.dropout_rate;
    std::bernoulli_distribution bernoulli(keep);
    Matrix mask(rows, columns);
    for (Eigen::Index c = 0; c < columns; ++c) {
        for (Eigen::Index r = 0; r < rows; ++r) {
            mask(r, c) = bernoulli(rng) ? 1.0 / keep : 0.0;
        }
    }
    return mask;
}

ForwardTrace forward(const Network& net, const Matrix& inputs, Mode mode, Rng& rng) {
    if (mode == Mode::Eval || !dropout_active(net)) {
        return run_forward(net, inputs, nullptr);
    }
    const Matrix mask = sample_dropout_mask(net, inputs.cols(), rng);
    return run_forward(net, inputs, &mask);
}

ForwardTrace forward(const Network& net, const Matrix& inputs) {
    return run_forward(net, inputs, nullptr);
}

ForwardTrace forward_with_mask(const Network& net, const Matrix& inputs, const Matrix& mask) {
    if (!net.dropout_after) {
        return run_forward(net, inputs, nullptr);
    }
    return run_forward(net, inputs, &mask);
}

Vector logits(const Network& net, const Vector& x) { return forward(net, x).logits().col(0); }

Vector features(const Network& net, const Vector& x) { return forward(net, x).penultimate().col(0); }

Matrix features(const Network& net, const Matrix& inputs) { return forward(net, inputs).penultimate(); }

GradientSet backward(const Network& net, const ForwardTrace& trace, const Matrix& dlogits) {
    const std::size_t n_layers = net.layers.size();
    require(trace.pre.size() == n_layers && trace.act.size() == n_layers,
            "backward: trace does not match network");
    require(dlogits.rows() == trace.logits().rows() && dlogits.cols() == trace.logits().cols(),
            "backward: upstream gradient shape mismatch");
    GradientSet grads(n_layers);
    Matrix delta = dlogits;
    for (std::size_t i = n_layers; i-- > 0;) {
        grads[i].weight = delta * trace.act[i].transpose();
        grads[i].bias = delta.rowwise().sum();
        if (i == 0) {
            break;
        }
        Matrix upstream = net.layers[i].weight.transpose() * delta;
        if (trace.dropout_mask && net.dropout_after == i - 1) {
            upstream.array() *= trace.dropout_mask->array();
        }
        delta = (trace.pre[i - 1].array() > 0.0).select(upstream, 0.0);
    }
    return grads;
}

GradientSet zeros_like(const Network& net) {
    GradientSet out;
    out.reserve(net.layers.size());
    for (const auto& layer : net.layers) {
        out.push_back({Matrix::Zero(layer.weight.rows(), layer.weight.cols()),
                       Vector::Zero(layer.bias.size())});
    }
    return out;
}

ParamTensors parameters_of(const Network& net) { return net.layers; }

Vector softmax(const Vector& logits) {
    if (logits.size() == 0) {
        return logits;
    }
    Vector p = (logits.array() - logits.maxCoeff()).exp();
    return p / p.sum();
}

LossGrad classification_loss(const Vector& logits, std::size_t label) {
    require(label < static_cast<std::size_t>(logits.size()),
            "classification_loss: label " + std::to_string(label) + " outside registered classes");
    const double peak = logits.maxCoeff();
    const double lse = peak + std::log((logits.array() - peak).exp().sum());
    LossGrad out;
    out.loss = lse - logits(static_cast<Eigen::Index>(label));
    out.grad = (logits.array() - lse).exp();
    out.grad(static_cast<Eigen::Index>(label)) -= 1.0;
    return out;
}

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

LossGrad distillation_loss(const Vector& old_logits, const Vector& new_logits) {
    require(old_logits.size() <= new_logits.size(),
            "distillation_loss: previous classes are not a subset of current classes");
    LossGrad out;
    out.grad = Vector::Zero(new_logits.size());
    for (Eigen::Index j = 0; j < old_logits.size(); ++j) {
        const double target = sigmoid(old_logits(j));
        const double z = new_logits(j);
        // -[q log S(z) + (1 - q) log(1 - S(z))] == softplus(z) - q z
        out.loss += softplus(z) - target * z;
        out.grad(j) = sigmoid(z) - target;
    }
    return out;
}

BatchLoss total_loss_and_grads(const Network& net, const Network* previous, const Matrix& inputs,
                               std::span<const std::size_t> labels, double gamma, Rng& rng) {
    require(inputs.cols() > 0, "total_loss_and_grads: empty batch");
    require(static_cast<std::size_t>(inputs.cols()) == labels.size(),
            "total_loss_and_grads: label count does not match batch");
    const ForwardTrace trace = forward(net, inputs, Mode::Train, rng);
    const Matrix& z = trace.logits();
    std::optional<Matrix> old_z;
    if (previous != nullptr) {
        old_z = forward(*previous, inputs).logits();
    }
    const double scale = 1.0 / static_cast<double>(inputs.cols());
    Matrix dlogits(z.rows(), z.cols());
    double total = 0.0;
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
        LossGrad cls = classification_loss(z.col(c), labels[static_cast<std::size_t>(c)]);
        total += cls.loss;
        if (old_z) {
            const LossGrad dist = distillation_loss(old_z->col(c), z.col(c));
            total += gamma * dist.loss;
            cls.grad += gamma * dist.grad;
        }
        dlogits.col(c) = cls.grad * scale;
    }
    return {total * scale, backward(net, trace, dlogits)};
}

OptimizerState make_optimizer(const Network& net, double learning_rate, double momentum) {
    return {zeros_like(net), learning_rate, momentum};
}

void sgd_nesterov_step(Network& net, const GradientSet& grads, OptimizerState& state) {
    check_congruent(net, grads, "sgd_nesterov_step gradients");
    check_congruent(net, state.velocity, "sgd_nesterov_step velocity");
    const double mu = state.momentum;
    const double lr = state.learning_rate;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        DenseLayer& p = net.layers[i];
        DenseLayer& v = state.velocity[i];
        const Matrix w_prev = v.weight;
        v.weight = mu * v.weight - lr * grads[i].weight;
        p.weight += -mu * w_prev + (1.0 + mu) * v.weight;
        const Vector b_prev = v.bias;
        v.bias = mu * v.bias - lr * grads[i].bias;
        p.bias += -mu * b_prev + (1.0 + mu) * v.bias;
    }
}

Network expand_output(const Network& net, std::size_t n_new, Rng& rng) {
    if (n_new == 0) {
        return net;
    }
    require(!net.layers.empty(), "expand_output: network has no layers");
    Network out = net;
    DenseLayer& head = out.layers.back();
    const Eigen::Index old_rows = head.weight.rows();
    const Eigen::Index cols = head.weight.cols();
    const auto added = static_cast<Eigen::Index>(n_new);
    Matrix fresh(added, cols);
    init_gaussian(fresh, 0.01, rng);
    Matrix weight(old_rows + added, cols);
    weight.topRows(old_rows) = head.weight;
    weight.bottomRows(added) = fresh;
    Vector bias = Vector::Zero(old_rows + added);
    bias.head(old_rows) = head.bias;
    head.weight = std::move(weight);
    head.bias = std::move(bias);
    return out;
}

}  // namespace driftbench::nn
