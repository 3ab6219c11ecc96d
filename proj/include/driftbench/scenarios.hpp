#ifndef DRIFTBENCH_SCENARIOS_HPP
#define DRIFTBENCH_SCENARIOS_HPP

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "driftbench/data.hpp"
#include "driftbench/metrics.hpp"
#include "driftbench/nn.hpp"
#include "driftbench/strategies.hpp"

namespace driftbench::scenarios {

enum class ScenarioKind { Domain, Class, DomainClass };

std::string_view scenario_name(ScenarioKind kind);  // "d", "c", "dc"
std::optional<ScenarioKind> parse_scenario(std::string_view name);

/// Raised when class names cannot be aligned across datasets. The message
/// carries the per-dataset mapping report.
struct AlignmentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Native class name -> canonical name. Names absent from the map stand for themselves.
using AlignmentMap = std::map<std::string, std::string>;

/// Dense global class indices in order of first introduction. Classes of
/// different datasets with the same canonical name share one index.
class LabelSpace {
public:
    std::size_t intern(std::size_t dataset, std::size_t native, const std::string& canonical_name);
    std::size_t global(std::size_t dataset, std::size_t native) const;
    std::optional<std::size_t> find(const std::string& canonical_name) const;
    const std::vector<std::string>& names() const { return names_; }
    std::size_t size() const { return names_.size(); }

private:
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> mapping_;
    std::map<std::string, std::size_t> by_name_;
    std::vector<std::string> names_;
};

struct TaskSpec {
    std::size_t task_id = 0;  // from 1
    std::size_t dataset = 0;
    std::size_t domain = 0;
    std::vector<std::size_t> classes;      // global classes whose data the task carries
    std::vector<std::size_t> new_classes;  // subset introduced to the label space here
    std::vector<data::SampleId> train;
    std::vector<data::SampleId> test;
};

struct SplitDataset {
    data::Dataset dataset;
    data::Split split;
};

struct ScenarioPlan {
    ScenarioKind kind = ScenarioKind::Domain;
    std::vector<TaskSpec> tasks;
    LabelSpace labels;
    data::SampleStore store;  // every sample, relabelled with global class indices
    std::size_t input_dim = 0;
    // Also evaluate tasks not yet trained on (only meaningful for domain streams).
    bool forward_eval = false;

    /// Task ids increase from 1, train/test disjoint, every id resolvable.
    void validate() const;
};

ScenarioPlan build_domain_incremental(std::span<const SplitDataset> datasets, const AlignmentMap& alignment = {});

/// `class_order` lists native class indices in introduction order; native
/// order when empty.
ScenarioPlan build_class_incremental(const SplitDataset& dataset, std::span<const std::size_t> schedule,
                                     std::span<const std::size_t> class_order = {});

ScenarioPlan build_domain_class_incremental(std::span<const SplitDataset> datasets,
                                            std::span<const std::vector<std::size_t>> schedules,
                                            const AlignmentMap& alignment = {},
                                            std::span<const std::vector<std::size_t>> class_orders = {});

struct TaskRecord {
    std::size_t task_id = 0;
    std::vector<double> accuracies;  // a[k][1..k]
    nn::Network network;
    std::optional<nlohmann::json> exemplar_manifest;
    std::uint64_t checkpoint_hash = 0;
};

struct ForwardEntry {
    std::size_t after_task = 0;
    std::size_t eval_task = 0;
    double accuracy = 0.0;
};

struct RunResult {
    metrics::AccuracyMatrix matrix;
    std::vector<TaskRecord> records;
    std::vector<ForwardEntry> forward;  // only with plan.forward_eval
    bool valid = true;
    std::string error;
};

/// Accuracy of `learner` on a task's test split, counting only samples whose
/// class is in `known`. Returns nullopt when no sample qualifies.
std::optional<double> evaluate_task(const strategies::Learner& learner, const ScenarioPlan& plan,
                                    const TaskSpec& task, std::size_t known_classes);

/// Trains the strategy through the plan, filling a[k][j] for j <= k. A
/// strategy failure stops the run and marks the result invalid, keeping the
/// rows completed so far.
RunResult run_scenario(const ScenarioPlan& plan, strategies::StrategyKind kind,
                       const strategies::StrategyConfig& cfg);

}  // namespace driftbench::scenarios

#endif  // DRIFTBENCH_SCENARIOS_HPP
