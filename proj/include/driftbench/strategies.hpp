#ifndef DRIFTBENCH_STRATEGIES_HPP
#define DRIFTBENCH_STRATEGIES_HPP

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "driftbench/data.hpp"
#include "driftbench/exemplar.hpp"
#include "driftbench/nn.hpp"

namespace driftbench::strategies {

enum class StrategyKind { Uacl, Finetune, Ewc, Icarl, UpperBound };

std::string_view strategy_name(StrategyKind kind);
std::optional<StrategyKind> parse_strategy(std::string_view name);

struct StrategyConfig {
    std::size_t epochs = 30;
    double learning_rate = 5e-4;
    double momentum = 0.9;
    double gamma = 1.0;         // distillation weight
    std::size_t budget = 1000;  // K, total stored exemplars
    std::size_t mc_passes = 10; // T
    std::size_t batch_size = 32;
    double ewc_importance = 3000.0;
    double ewc_learning_rate = 3e-4;
    double ewc_decay = 0.9;  // F <- decay * F_old + F_new
    std::uint64_t seed = 0;

    std::vector<std::size_t> hidden{64, 64, 64, 64};
    double dropout_rate = 0.25;
    std::size_t dropout_after = 1;

    /// Throws std::invalid_argument on non-positive rates or empty sizes.
    void validate() const;
};

nlohmann::json to_json(const StrategyConfig& cfg);
/// Missing keys keep their defaults.
StrategyConfig strategy_config_from_json(const nlohmann::json& doc, StrategyConfig base = {});

/// Diagonal Fisher importance and the anchor parameters it was taken at.
struct FisherDiag {
    nn::ParamTensors importance;
    nn::ParamTensors anchor;
};

struct TaskInput {
    std::size_t task_index = 0;                  // 0-based position in the stream
    std::vector<const data::Sample*> train;      // labels are global class indices
    std::vector<std::size_t> new_classes;        // continue the class registry densely
};

struct TaskOutcome {
    nn::Network network;
    std::optional<memory::ExemplarSet> exemplars;
    std::optional<FisherDiag> fisher;
    std::vector<double> accuracies;  // filled in by the scenario driver
};

nn::Network initial_network(std::size_t input_dim, const StrategyConfig& cfg);

/// Expands the head, trains on D_t plus the rehearsal pool with
/// cross-entropy plus gamma-weighted distillation against `previous`, then
/// refreshes the exemplar memory with the new model.
TaskOutcome train_task_uacl(const nn::Network& previous, const TaskInput& task,
                            const memory::ExemplarSet& exemplars, const data::SampleStore& store,
                            const StrategyConfig& cfg);

TaskOutcome train_task_finetune(const nn::Network& previous, const TaskInput& task,
                                const StrategyConfig& cfg);

/// Mean squared per-sample gradient of the cross-entropy at the true label,
/// evaluated without dropout. Anchor is the current parameter set.
FisherDiag estimate_fisher_diag(const nn::Network& net, const std::vector<const data::Sample*>& samples);

struct Penalty {
    double value = 0.0;
    nn::GradientSet grads;
};

/// (importance / 2) * sum_i F_i (theta_i - anchor_i)^2 over the parameters the
/// Fisher covers. Output rows added after the anchor was taken are free.
Penalty ewc_penalty(const nn::Network& net, const FisherDiag& fisher, double importance);

TaskOutcome train_task_ewc(const nn::Network& previous, const std::optional<FisherDiag>& fisher,
                           const TaskInput& task, const StrategyConfig& cfg);

/// UACL training with herding-only memory (full quota per class).
TaskOutcome train_task_icarl(const nn::Network& previous, const TaskInput& task,
                             const memory::ExemplarSet& exemplars, const data::SampleStore& store,
                             const StrategyConfig& cfg);

/// Joint training on every training sample seen so far, `seen` already
/// including the current task's data.
TaskOutcome train_task_upperbound(const nn::Network& previous, const std::vector<const data::Sample*>& seen,
                                  const TaskInput& task, const StrategyConfig& cfg);

/// Index of the largest entry, lowest index on ties.
std::size_t argmax(const nn::Vector& values);

std::size_t classify(const nn::Network& net, const nn::Vector& x);

using ClassMeans = std::map<std::size_t, nn::Vector>;

ClassMeans exemplar_means(const nn::Network& net, const memory::ExemplarSet& exemplars,
                          const data::SampleStore& store);

/// Nearest class mean in feature space, lowest class id on ties. Throws
/// std::invalid_argument when `means` is empty.
std::size_t classify_nme(const nn::Network& net, const ClassMeans& means, const nn::Vector& x);

/// Carries one strategy's state from task to task.
class Learner {
public:
    Learner(StrategyKind kind, StrategyConfig cfg, std::size_t input_dim);

    void train_task(const TaskInput& task, const data::SampleStore& store);

    std::vector<std::size_t> predict(const nn::Matrix& inputs) const;

    StrategyKind kind() const { return kind_; }
    const StrategyConfig& config() const { return cfg_; }
    const nn::Network& network() const { return network_; }
    const std::optional<memory::ExemplarSet>& exemplars() const { return exemplars_; }
    const std::optional<FisherDiag>& fisher() const { return fisher_; }

private:
    StrategyKind kind_;
    StrategyConfig cfg_;
    nn::Network network_;
    std::optional<memory::ExemplarSet> exemplars_;
    std::optional<FisherDiag> fisher_;
    std::vector<const data::Sample*> seen_;
    ClassMeans means_;
};

}  // namespace driftbench::strategies

#endif  // DRIFTBENCH_STRATEGIES_HPP
