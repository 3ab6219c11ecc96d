#include "driftbench/strategies.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace driftbench::strategies {

using nlohmann::json;

namespace {

struct FitOptions {
    const nn::Network* teacher = nullptr;
    double gamma = 0.0;
    double learning_rate = 0.0;
    const FisherDiag* fisher = nullptr;
    double importance = 0.0;
};

void require(bool condition, const std::string& message) {
    if (!condition) {
        throw std::invalid_argument(message);
    }
}

void check_new_classes(const nn::Network& previous, const TaskInput& task) {
    std::size_t expected = previous.output_dim();
    for (const std::size_t c : task.new_classes) {
        require(c == expected, "task " + std::to_string(task.task_index + 1) + ": class id " +
                                   std::to_string(c) + " collides with the registry (expected " +
                                   std::to_string(expected) + ")");
        ++expected;
    }
}

nn::Network expanded(const nn::Network& previous, const TaskInput& task, const StrategyConfig& cfg) {
    check_new_classes(previous, task);
    Rng rng(derive_seed(cfg.seed, "expand", task.task_index));
    return nn::expand_output(previous, task.new_classes.size(), rng);
}

void check_fisher_shape(const nn::Network& net, const FisherDiag& fisher) {
    require(fisher.importance.size() == net.layers.size() && fisher.anchor.size() == net.layers.size(),
            "fisher: layer count does not match network");
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const auto& w = net.layers[i].weight;
        const auto& f = fisher.importance[i];
        const auto& a = fisher.anchor[i];
        const bool head = i + 1 == net.layers.size();
        const bool rows_ok = head ? f.weight.rows() <= w.rows() : f.weight.rows() == w.rows();
        require(rows_ok && f.weight.cols() == w.cols() && f.bias.size() == f.weight.rows() &&
                    a.weight.rows() == f.weight.rows() && a.weight.cols() == f.weight.cols() &&
                    a.bias.size() == f.bias.size(),
                "fisher: shape mismatch at layer " + std::to_string(i));
    }
}

// Zero-pads the head rows so the tensors cover an expanded network.
nn::ParamTensors pad_to(const nn::ParamTensors& tensors, const nn::Network& net) {
    nn::ParamTensors out = nn::zeros_like(net);
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        out[i].weight.topRows(tensors[i].weight.rows()) = tensors[i].weight;
        out[i].bias.head(tensors[i].bias.size()) = tensors[i].bias;
    }
    return out;
}

// Exact minimiser of the EWC quadratic around the post-step point:
//   theta <- anchor + (theta - anchor) / (1 + lr * importance * F)
// Stable for any importance, and equal to the explicit gradient step to first order.
void ewc_proximal(nn::Network& net, const FisherDiag& fisher, double coefficient) {
    for (std::size_t i = 0; i < fisher.importance.size(); ++i) {
        auto& layer = net.layers[i];
        const auto rows = fisher.importance[i].weight.rows();
        auto w = layer.weight.topRows(rows);
        w = fisher.anchor[i].weight.array() +
            (w.array() - fisher.anchor[i].weight.array()) /
                (1.0 + coefficient * fisher.importance[i].weight.array());
        auto b = layer.bias.head(rows);
        b = fisher.anchor[i].bias.array() +
            (b.array() - fisher.anchor[i].bias.array()) / (1.0 + coefficient * fisher.importance[i].bias.array());
    }
}

void fit(nn::Network& net, const std::vector<const data::Sample*>& pool, const FitOptions& options,
         const StrategyConfig& cfg, Rng& rng) {
    if (pool.empty() || cfg.epochs == 0) {
        return;
    }
    if (options.fisher != nullptr) {
        check_fisher_shape(net, *options.fisher);
    }
    auto optimizer = nn::make_optimizer(net, options.learning_rate, cfg.momentum);
    const double prox = options.learning_rate * options.importance;
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::size_t> labels;
    std::vector<const data::Sample*> batch;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            batch.clear();
            labels.clear();
            for (std::size_t i = start; i < end; ++i) {
                batch.push_back(pool[order[i]]);
                labels.push_back(pool[order[i]]->label);
            }
            const nn::Matrix inputs = data::stack_features(batch);
            const nn::BatchLoss step =
                nn::total_loss_and_grads(net, options.teacher, inputs, labels, options.gamma, rng);
            nn::sgd_nesterov_step(net, step.grads, optimizer);
            if (options.fisher != nullptr && prox > 0.0) {
                ewc_proximal(net, *options.fisher, prox);
            }
        }
    }
}

std::vector<const data::Sample*> concat(const std::vector<const data::Sample*>& a,
                                        const std::vector<const data::Sample*>& b) {
    std::vector<const data::Sample*> out(a);
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

// Old classes without new data shrink from the tail; classes present in D_t
// are reselected from D_t plus their stored exemplars using the new model.
memory::ExemplarSet refresh_memory(const nn::Network& net, const memory::ExemplarSet& previous,
                                   const TaskInput& task, const data::SampleStore& store,
                                   const StrategyConfig& cfg) {
    memory::ExemplarSet next = memory::reduce_exemplar_set(previous, net.output_dim());
    const memory::ClassQuota quota = next.quota();

    std::map<std::size_t, std::vector<const data::Sample*>> candidates;
    for (const data::Sample* s : task.train) {
        candidates[s->label].push_back(s);
    }
    for (auto& [class_id, members] : candidates) {
        if (const auto it = previous.classes.find(class_id); it != previous.classes.end()) {
            for (const auto id : it->second.ids()) {
                members.push_back(&store.at(id));
            }
        }
        std::sort(members.begin(), members.end(),
                  [](const data::Sample* a, const data::Sample* b) { return a->id < b->id; });
        members.erase(std::unique(members.begin(), members.end(),
                                  [](const data::Sample* a, const data::Sample* b) { return a->id == b->id; }),
                      members.end());
        std::vector<data::SampleId> ids;
        ids.reserve(members.size());
        for (const auto* s : members) ids.push_back(s->id);
        const std::uint64_t seed = derive_seed(cfg.seed, "mc", task.task_index, class_id);
        next.classes[class_id] = memory::build_class_exemplars(net, class_id, data::stack_features(members), ids,
                                                               quota.herding, quota.uncertainty,
                                                               cfg.mc_passes, seed);
    }
    for (auto it = next.classes.begin(); it != next.classes.end();) {
        it = it->second.size() == 0 ? next.classes.erase(it) : std::next(it);
    }
    return next;
}

TaskOutcome train_rehearsal(const nn::Network& previous, const TaskInput& task,
                            const memory::ExemplarSet& exemplars, const data::SampleStore& store,
                            const StrategyConfig& cfg, memory::SelectionRule rule) {
    cfg.validate();
    TaskOutcome out;
    out.network = expanded(previous, task, cfg);
    const bool distill = previous.output_dim() > 0 && cfg.gamma != 0.0;
    FitOptions options;
    options.teacher = distill ? &previous : nullptr;
    options.gamma = cfg.gamma;
    options.learning_rate = cfg.learning_rate;
    const auto pool = concat(task.train, memory::assemble_rehearsal_pool(exemplars, store));
    Rng rng(derive_seed(cfg.seed, "train", task.task_index));
    fit(out.network, pool, options, cfg, rng);

    memory::ExemplarSet current = exemplars;
    current.budget = cfg.budget;
    current.rule = rule;
    out.exemplars = refresh_memory(out.network, current, task, store, cfg);
    return out;
}

}  // namespace

std::string_view strategy_name(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::Uacl: return "uacl";
        case StrategyKind::Finetune: return "finetune";
        case StrategyKind::Ewc: return "ewc";
        case StrategyKind::Icarl: return "icarl";
        case StrategyKind::UpperBound: return "upperbound";
    }
    return "unknown";
}

std::optional<StrategyKind> parse_strategy(std::string_view name) {
    for (const auto kind : {StrategyKind::Uacl, StrategyKind::Finetune, StrategyKind::Ewc, StrategyKind::Icarl,
                            StrategyKind::UpperBound}) {
        if (strategy_name(kind) == name) {
            return kind;
        }
    }
    return std::nullopt;
}

void StrategyConfig::validate() const {
    require(learning_rate > 0.0 && ewc_learning_rate > 0.0, "strategy config: learning rates must be positive");
    require(momentum >= 0.0 && momentum < 1.0, "strategy config: momentum must lie in [0, 1)");
    require(gamma >= 0.0, "strategy config: gamma must be non-negative");
    require(mc_passes >= 1, "strategy config: need at least one MC dropout pass");
    require(batch_size >= 1, "strategy config: batch size must be positive");
    require(ewc_importance >= 0.0, "strategy config: EWC importance must be non-negative");
    require(ewc_decay >= 0.0, "strategy config: EWC decay must be non-negative");
    require(!hidden.empty(), "strategy config: need at least one hidden layer");
    require(dropout_rate >= 0.0 && dropout_rate < 1.0, "strategy config: dropout rate must lie in [0, 1)");
    require(dropout_after < hidden.size(), "strategy config: dropout position out of range");
}

json to_json(const StrategyConfig& cfg) {
    return {{"epochs", cfg.epochs},
            {"learning_rate", cfg.learning_rate},
            {"momentum", cfg.momentum},
            {"gamma", cfg.gamma},
            {"budget", cfg.budget},
            {"mc_passes", cfg.mc_passes},
            {"batch_size", cfg.batch_size},
            {"ewc_importance", cfg.ewc_importance},
            {"ewc_learning_rate", cfg.ewc_learning_rate},
            {"ewc_decay", cfg.ewc_decay},
            {"seed", cfg.seed},
            {"hidden", cfg.hidden},
            {"dropout_rate", cfg.dropout_rate},
            {"dropout_after", cfg.dropout_after}};
}

StrategyConfig strategy_config_from_json(const json& doc, StrategyConfig c) {
    c.epochs = doc.value("epochs", c.epochs);
    c.learning_rate = doc.value("learning_rate", c.learning_rate);
    c.momentum = doc.value("momentum", c.momentum);
    c.gamma = doc.value("gamma", c.gamma);
    c.budget = doc.value("budget", c.budget);
    c.mc_passes = doc.value("mc_passes", c.mc_passes);
    c.batch_size = doc.value("batch_size", c.batch_size);
    c.ewc_importance = doc.value("ewc_importance", c.ewc_importance);
    c.ewc_learning_rate = doc.value("ewc_learning_rate", c.ewc_learning_rate);
    c.ewc_decay = doc.value("ewc_decay", c.ewc_decay);
    c.seed = doc.value("seed", c.seed);
    c.hidden = doc.value("hidden", c.hidden);
    c.dropout_rate = doc.value("dropout_rate", c.dropout_rate);
    c.dropout_after = doc.value("dropout_after", c.dropout_after);
    return c;
}

nn::Network initial_network(std::size_t input_dim, const StrategyConfig& cfg) {
    cfg.validate();
    nn::Architecture arch;
    arch.input_dim = input_dim;
    arch.hidden = cfg.hidden;
    arch.dropout_rate = cfg.dropout_rate;
    arch.dropout_after = cfg.dropout_after;
    Rng rng(derive_seed(cfg.seed, "init"));
    return nn::make_network(arch, rng);
}

TaskOutcome train_task_uacl(const nn::Network& previous, const TaskInput& task,
                            const memory::ExemplarSet& exemplars, const data::SampleStore& store,
                            const StrategyConfig& cfg) {
    return train_rehearsal(previous, task, exemplars, store, cfg, memory::SelectionRule::HerdingAndUncertainty);
}

TaskOutcome train_task_icarl(const nn::Network& previous, const TaskInput& task,
                             const memory::ExemplarSet& exemplars, const data::SampleStore& store,
                             const StrategyConfig& cfg) {
    return train_rehearsal(previous, task, exemplars, store, cfg, memory::SelectionRule::HerdingOnly);
}

TaskOutcome train_task_finetune(const nn::Network& previous, const TaskInput& task, const StrategyConfig& cfg) {
    cfg.validate();
    TaskOutcome out;
    out.network = expanded(previous, task, cfg);
    FitOptions options;
    options.learning_rate = cfg.learning_rate;
    Rng rng(derive_seed(cfg.seed, "train", task.task_index));
    fit(out.network, task.train, options, cfg, rng);
    return out;
}

FisherDiag estimate_fisher_diag(const nn::Network& net, const std::vector<const data::Sample*>& samples) {
    require(!samples.empty(), "estimate_fisher_diag: empty sample set");
    FisherDiag out;
    out.importance = nn::zeros_like(net);
    out.anchor = nn::parameters_of(net);
    for (const data::Sample* s : samples) {
        const nn::ForwardTrace trace = nn::forward(net, s->features);
        const nn::LossGrad cls = nn::classification_loss(trace.logits().col(0), s->label);
        const nn::GradientSet g = nn::backward(net, trace, cls.grad);
        for (std::size_t i = 0; i < g.size(); ++i) {
            out.importance[i].weight.array() += g[i].weight.array().square();
            out.importance[i].bias.array() += g[i].bias.array().square();
        }
    }
    const double inv = 1.0 / static_cast<double>(samples.size());
    for (auto& layer : out.importance) {
        layer.weight *= inv;
        layer.bias *= inv;
    }
    return out;
}

Penalty ewc_penalty(const nn::Network& net, const FisherDiag& fisher, double importance) {
    check_fisher_shape(net, fisher);
    Penalty out;
    out.grads = nn::zeros_like(net);
    for (std::size_t i = 0; i < fisher.importance.size(); ++i) {
        const auto rows = fisher.importance[i].weight.rows();
        const nn::Matrix dw = net.layers[i].weight.topRows(rows) - fisher.anchor[i].weight;
        const nn::Vector db = net.layers[i].bias.head(rows) - fisher.anchor[i].bias;
        out.value += 0.5 * importance *
                     ((fisher.importance[i].weight.array() * dw.array().square()).sum() +
                      (fisher.importance[i].bias.array() * db.array().square()).sum());
        out.grads[i].weight.topRows(rows) = importance * (fisher.importance[i].weight.array() * dw.array()).matrix();
        out.grads[i].bias.head(rows) = importance * (fisher.importance[i].bias.array() * db.array()).matrix();
    }
    return out;
}

TaskOutcome train_task_ewc(const nn::Network& previous, const std::optional<FisherDiag>& fisher,
                           const TaskInput& task, const StrategyConfig& cfg) {
    cfg.validate();
    TaskOutcome out;
    out.network = expanded(previous, task, cfg);
    std::optional<FisherDiag> padded;
    if (fisher) {
        check_fisher_shape(out.network, *fisher);
        padded = FisherDiag{pad_to(fisher->importance, out.network), pad_to(fisher->anchor, out.network)};
    }
    FitOptions options;
    options.learning_rate = cfg.ewc_learning_rate;
    options.fisher = padded ? &*padded : nullptr;
    options.importance = cfg.ewc_importance;
    Rng rng(derive_seed(cfg.seed, "train", task.task_index));
    fit(out.network, task.train, options, cfg, rng);

    FisherDiag next = estimate_fisher_diag(out.network, task.train);
    if (padded) {
        for (std::size_t i = 0; i < next.importance.size(); ++i) {
            next.importance[i].weight += cfg.ewc_decay * padded->importance[i].weight;
            next.importance[i].bias += cfg.ewc_decay * padded->importance[i].bias;
        }
    }
    out.fisher = std::move(next);
    return out;
}

TaskOutcome train_task_upperbound(const nn::Network& previous, const std::vector<const data::Sample*>& seen,
                                  const TaskInput& task, const StrategyConfig& cfg) {
    cfg.validate();
    TaskOutcome out;
    out.network = expanded(previous, task, cfg);
    FitOptions options;
    options.learning_rate = cfg.learning_rate;
    Rng rng(derive_seed(cfg.seed, "train", task.task_index));
    fit(out.network, seen, options, cfg, rng);
    return out;
}

std::size_t argmax(const nn::Vector& values) {
    require(values.size() > 0, "argmax: no classes registered");
    std::size_t best = 0;
    for (Eigen::Index i = 1; i < values.size(); ++i) {
        if (values(i) > values(static_cast<Eigen::Index>(best))) {
            best = static_cast<std::size_t>(i);
        }
    }
    return best;
}

std::size_t classify(const nn::Network& net, const nn::Vector& x) { return argmax(nn::logits(net, x)); }

ClassMeans exemplar_means(const nn::Network& net, const memory::ExemplarSet& exemplars,
                          const data::SampleStore& store) {
    ClassMeans means;
    for (const auto& [class_id, entry] : exemplars.classes) {
        if (entry.size() == 0) {
            continue;
        }
        std::vector<const data::Sample*> members;
        for (const auto id : entry.ids()) members.push_back(&store.at(id));
        means[class_id] = nn::features(net, data::stack_features(members)).rowwise().mean();
    }
    return means;
}

std::size_t classify_nme(const nn::Network& net, const ClassMeans& means, const nn::Vector& x) {
    require(!means.empty(), "classify_nme: no class has exemplars");
    const nn::Vector psi = nn::features(net, x);
    std::size_t best = means.begin()->first;
    double best_dist = std::numeric_limits<double>::infinity();
    for (const auto& [class_id, mean] : means) {
        const double d = (psi - mean).squaredNorm();
        if (d < best_dist) {
            best_dist = d;
            best = class_id;
        }
    }
    return best;
}

Learner::Learner(StrategyKind kind, StrategyConfig cfg, std::size_t input_dim)
    : kind_(kind), cfg_(std::move(cfg)), network_(initial_network(input_dim, cfg_)) {
    if (kind_ == StrategyKind::Uacl || kind_ == StrategyKind::Icarl) {
        memory::ExemplarSet empty;
        empty.budget = cfg_.budget;
        empty.rule = kind_ == StrategyKind::Icarl ? memory::SelectionRule::HerdingOnly
                                                  : memory::SelectionRule::HerdingAndUncertainty;
        exemplars_ = std::move(empty);
    }
}

void Learner::train_task(const TaskInput& task, const data::SampleStore& store) {
    TaskOutcome outcome;
    switch (kind_) {
        case StrategyKind::Uacl:
            outcome = train_task_uacl(network_, task, *exemplars_, store, cfg_);
            break;
        case StrategyKind::Icarl:
            outcome = train_task_icarl(network_, task, *exemplars_, store, cfg_);
            break;
        case StrategyKind::Finetune:
            outcome = train_task_finetune(network_, task, cfg_);
            break;
        case StrategyKind::Ewc:
            outcome = train_task_ewc(network_, fisher_, task, cfg_);
            break;
        case StrategyKind::UpperBound:
            seen_.insert(seen_.end(), task.train.begin(), task.train.end());
            outcome = train_task_upperbound(network_, seen_, task, cfg_);
            break;
    }
    network_ = std::move(outcome.network);
    if (outcome.exemplars) exemplars_ = std::move(outcome.exemplars);
    if (outcome.fisher) fisher_ = std::move(outcome.fisher);
    if (kind_ == StrategyKind::Icarl) {
        means_ = exemplar_means(network_, *exemplars_, store);
    }
}

std::vector<std::size_t> Learner::predict(const nn::Matrix& inputs) const {
    std::vector<std::size_t> out(static_cast<std::size_t>(inputs.cols()));
    const nn::ForwardTrace trace = nn::forward(network_, inputs);
    const bool nme = kind_ == StrategyKind::Icarl && !means_.empty();
    for (Eigen::Index c = 0; c < inputs.cols(); ++c) {
        if (!nme) {
            out[static_cast<std::size_t>(c)] = argmax(trace.logits().col(c));
            continue;
        }
        std::size_t best = means_.begin()->first;
        double best_dist = std::numeric_limits<double>::infinity();
        for (const auto& [class_id, mean] : means_) {
            const double d = (trace.penultimate().col(c) - mean).squaredNorm();
            if (d < best_dist) {
                best_dist = d;
                best = class_id;
            }
        }
        out[static_cast<std::size_t>(c)] = best;
    }
    return out;
}

}  // namespace driftbench::strategies
