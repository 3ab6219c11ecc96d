#include "driftbench/scenarios.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "driftbench/checkpoint.hpp"
#include "driftbench/exemplar.hpp"

namespace driftbench::scenarios {

namespace {

std::string canonical(const AlignmentMap& alignment, const std::string& name) {
    const auto it = alignment.find(name);
    return it == alignment.end() ? name : it->second;
}

std::vector<std::size_t> resolve_order(const data::Dataset& ds, std::span<const std::size_t> class_order) {
    const std::size_t n = ds.class_names.size();
    if (class_order.empty()) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        return order;
    }
    std::vector<std::size_t> order(class_order.begin(), class_order.end());
    std::vector<std::size_t> sorted(order);
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> expected(n);
    std::iota(expected.begin(), expected.end(), 0);
    if (sorted != expected) {
        throw std::invalid_argument("class order for " + ds.name + " is not a permutation of its classes");
    }
    return order;
}

void check_schedule(const data::Dataset& ds, std::span<const std::size_t> schedule) {
    if (schedule.empty()) {
        throw std::invalid_argument("empty class schedule for " + ds.name);
    }
    std::size_t total = 0;
    for (const std::size_t n : schedule) {
        if (n == 0) {
            throw std::invalid_argument("class schedule for " + ds.name + " has an empty task");
        }
        total += n;
    }
    if (total != ds.class_names.size()) {
        throw std::invalid_argument("class schedule for " + ds.name + " sums to " + std::to_string(total) +
                                    " but the dataset has " + std::to_string(ds.class_names.size()) +
                                    " classes");
    }
}

std::unordered_map<data::SampleId, std::size_t> labels_by_id(const data::Dataset& ds) {
    std::unordered_map<data::SampleId, std::size_t> out;
    out.reserve(ds.samples.size());
    for (const auto& s : ds.samples) out.emplace(s.id, s.label);
    return out;
}

void append_class_tasks(ScenarioPlan& plan, std::size_t dataset_index, const SplitDataset& sd,
                        std::span<const std::size_t> schedule, std::span<const std::size_t> class_order,
                        const AlignmentMap& alignment) {
    const data::Dataset& ds = sd.dataset;
    check_schedule(ds, schedule);
    const auto order = resolve_order(ds, class_order);
    const auto labels = labels_by_id(ds);
    std::size_t cursor = 0;
    for (const std::size_t count : schedule) {
        TaskSpec task;
        task.task_id = plan.tasks.size() + 1;
        task.dataset = dataset_index;
        task.domain = ds.domain;
        std::set<std::size_t> natives;
        for (std::size_t i = 0; i < count; ++i, ++cursor) {
            const std::size_t native = order[cursor];
            natives.insert(native);
            const std::size_t before = plan.labels.size();
            const std::size_t global =
                plan.labels.intern(dataset_index, native, canonical(alignment, ds.class_names[native]));
            task.classes.push_back(global);
            if (plan.labels.size() > before) {
                task.new_classes.push_back(global);
            }
        }
        for (const auto id : sd.split.train) {
            if (natives.contains(labels.at(id))) task.train.push_back(id);
        }
        for (const auto id : sd.split.test) {
            if (natives.contains(labels.at(id))) task.test.push_back(id);
        }
        plan.tasks.push_back(std::move(task));
    }
}

void fill_store(ScenarioPlan& plan, std::span<const SplitDataset> datasets) {
    for (std::size_t d = 0; d < datasets.size(); ++d) {
        const data::Dataset& ds = datasets[d].dataset;
        if (d == 0) {
            plan.input_dim = ds.feature_dim();
        } else if (ds.feature_dim() != plan.input_dim) {
            throw std::invalid_argument("dataset " + ds.name + " differs in feature dimension");
        }
        for (const auto& s : ds.samples) {
            data::Sample copy = s;
            copy.label = plan.labels.global(d, s.label);
            plan.store.add(std::move(copy));
        }
    }
}

}  // namespace

std::string_view scenario_name(ScenarioKind kind) {
    switch (kind) {
        case ScenarioKind::Domain: return "d";
        case ScenarioKind::Class: return "c";
        case ScenarioKind::DomainClass: return "dc";
    }
    return "unknown";
}

std::optional<ScenarioKind> parse_scenario(std::string_view name) {
    for (const auto kind : {ScenarioKind::Domain, ScenarioKind::Class, ScenarioKind::DomainClass}) {
        if (scenario_name(kind) == name) return kind;
    }
    return std::nullopt;
}

std::size_t LabelSpace::intern(std::size_t dataset, std::size_t native, const std::string& canonical_name) {
    const auto key = std::make_pair(dataset, native);
    if (const auto it = mapping_.find(key); it != mapping_.end()) {
        return it->second;
    }
    std::size_t global;
    if (const auto it = by_name_.find(canonical_name); it != by_name_.end()) {
        global = it->second;
    } else {
        global = names_.size();
        names_.push_back(canonical_name);
        by_name_.emplace(canonical_name, global);
    }
    mapping_.emplace(key, global);
    return global;
}

std::size_t LabelSpace::global(std::size_t dataset, std::size_t native) const {
    const auto it = mapping_.find({dataset, native});
    if (it == mapping_.end()) {
        throw std::out_of_range("label space: dataset " + std::to_string(dataset) + " class " +
                                std::to_string(native) + " is not registered");
    }
    return it->second;
}

std::optional<std::size_t> LabelSpace::find(const std::string& canonical_name) const {
    const auto it = by_name_.find(canonical_name);
    if (it == by_name_.end()) return std::nullopt;
    return it->second;
}

void ScenarioPlan::validate() const {
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        const TaskSpec& task = tasks[t];
        if (task.task_id != t + 1) {
            throw std::invalid_argument("scenario plan: task ids must run 1, 2, ...");
        }
        const std::unordered_set<data::SampleId> train(task.train.begin(), task.train.end());
        const std::set<std::size_t> classes(task.classes.begin(), task.classes.end());
        for (const auto id : task.test) {
            if (train.contains(id)) {
                throw std::invalid_argument("scenario plan: task " + std::to_string(task.task_id) +
                                            " shares sample " + std::to_string(id) + " between train and test");
            }
        }
        for (const auto id : task.train) {
            if (!classes.contains(store.at(id).label)) {
                throw std::invalid_argument("scenario plan: task " + std::to_string(task.task_id) +
                                            " trains on a class it does not carry");
            }
        }
        for (const auto id : task.test) (void)store.at(id);
    }
}

ScenarioPlan build_domain_incremental(std::span<const SplitDataset> datasets, const AlignmentMap& alignment) {
    if (datasets.size() < 2) {
        throw std::invalid_argument("domain-incremental stream needs at least two datasets");
    }
    std::vector<std::set<std::string>> name_sets;
    std::set<std::string> all;
    for (const auto& sd : datasets) {
        std::set<std::string> names;
        for (const auto& n : sd.dataset.class_names) names.insert(canonical(alignment, n));
        if (names.size() != sd.dataset.class_names.size()) {
            throw AlignmentError("dataset " + sd.dataset.name + " maps two classes to the same name");
        }
        all.insert(names.begin(), names.end());
        name_sets.push_back(std::move(names));
    }
    std::ostringstream report;
    bool aligned = true;
    for (std::size_t d = 0; d < datasets.size(); ++d) {
        std::vector<std::string> missing;
        std::set_difference(all.begin(), all.end(), name_sets[d].begin(), name_sets[d].end(),
                            std::back_inserter(missing));
        report << "\n  " << datasets[d].dataset.name << ": " << name_sets[d].size() << " classes";
        if (!missing.empty()) {
            aligned = false;
            report << ", missing";
            for (const auto& m : missing) report << ' ' << m;
        }
    }
    if (!aligned) {
        throw AlignmentError("class names do not align across datasets:" + report.str());
    }

    ScenarioPlan plan;
    plan.kind = ScenarioKind::Domain;
    for (std::size_t d = 0; d < datasets.size(); ++d) {
        const SplitDataset& sd = datasets[d];
        TaskSpec task;
        task.task_id = d + 1;
        task.dataset = d;
        task.domain = sd.dataset.domain;
        for (std::size_t native = 0; native < sd.dataset.class_names.size(); ++native) {
            const std::size_t before = plan.labels.size();
            const std::size_t global =
                plan.labels.intern(d, native, canonical(alignment, sd.dataset.class_names[native]));
            if (plan.labels.size() > before) task.new_classes.push_back(global);
        }
        task.classes.resize(plan.labels.size());
        std::iota(task.classes.begin(), task.classes.end(), 0);
        task.train = sd.split.train;
        task.test = sd.split.test;
        plan.tasks.push_back(std::move(task));
    }
    fill_store(plan, datasets);
    plan.validate();
    return plan;
}

ScenarioPlan build_class_incremental(const SplitDataset& dataset, std::span<const std::size_t> schedule,
                                     std::span<const std::size_t> class_order) {
    ScenarioPlan plan;
    plan.kind = ScenarioKind::Class;
    append_class_tasks(plan, 0, dataset, schedule, class_order, {});
    fill_store(plan, std::span<const SplitDataset>(&dataset, 1));
    plan.validate();
    return plan;
}

ScenarioPlan build_domain_class_incremental(std::span<const SplitDataset> datasets,
                                            std::span<const std::vector<std::size_t>> schedules,
                                            const AlignmentMap& alignment,
                                            std::span<const std::vector<std::size_t>> class_orders) {
    if (datasets.empty() || schedules.size() != datasets.size()) {
        throw std::invalid_argument("domain-class stream needs one schedule per dataset");
    }
    if (!class_orders.empty() && class_orders.size() != datasets.size()) {
        throw std::invalid_argument("domain-class stream: class orders must be given for every dataset");
    }
    ScenarioPlan plan;
    plan.kind = ScenarioKind::DomainClass;
    for (std::size_t d = 0; d < datasets.size(); ++d) {
        const std::span<const std::size_t> order =
            class_orders.empty() ? std::span<const std::size_t>() : std::span<const std::size_t>(class_orders[d]);
        append_class_tasks(plan, d, datasets[d], schedules[d], order, alignment);
    }
    fill_store(plan, datasets);
    plan.validate();
    return plan;
}

std::optional<double> evaluate_task(const strategies::Learner& learner, const ScenarioPlan& plan,
                                    const TaskSpec& task, std::size_t known_classes) {
    std::vector<const data::Sample*> samples;
    std::vector<std::size_t> labels;
    for (const auto id : task.test) {
        const data::Sample& s = plan.store.at(id);
        if (s.label < known_classes) {
            samples.push_back(&s);
            labels.push_back(s.label);
        }
    }
    if (samples.empty()) {
        return std::nullopt;
    }
    const auto predictions = learner.predict(data::stack_features(samples));
    return metrics::accuracy(predictions, labels);
}

RunResult run_scenario(const ScenarioPlan& plan, strategies::StrategyKind kind,
                       const strategies::StrategyConfig& cfg) {
    RunResult result;
    result.matrix = metrics::AccuracyMatrix(plan.tasks.size());
    try {
        strategies::Learner learner(kind, cfg, plan.input_dim);
        for (std::size_t k = 0; k < plan.tasks.size(); ++k) {
            const TaskSpec& task = plan.tasks[k];
            strategies::TaskInput input;
            input.task_index = k;
            input.new_classes = task.new_classes;
            input.train.reserve(task.train.size());
            for (const auto id : task.train) input.train.push_back(&plan.store.at(id));
            learner.train_task(input, plan.store);

            const std::size_t known = learner.network().output_dim();
            TaskRecord record;
            record.task_id = task.task_id;
            for (std::size_t j = 0; j <= k; ++j) {
                const auto acc = evaluate_task(learner, plan, plan.tasks[j], known);
                if (!acc) {
                    throw std::runtime_error("task " + std::to_string(j + 1) + " has no evaluable test samples");
                }
                result.matrix.set(k + 1, j + 1, *acc);
                record.accuracies.push_back(*acc);
            }
            if (plan.forward_eval) {
                for (std::size_t j = k + 1; j < plan.tasks.size(); ++j) {
                    if (const auto acc = evaluate_task(learner, plan, plan.tasks[j], known)) {
                        result.forward.push_back({k + 1, j + 1, *acc});
                    }
                }
            }
            record.network = learner.network();
            record.checkpoint_hash = nn::parameter_hash(record.network);
            if (learner.exemplars()) {
                record.exemplar_manifest = memory::exemplar_manifest(*learner.exemplars(), record.checkpoint_hash);
            }
            result.records.push_back(std::move(record));
        }
    } catch (const std::exception& e) {
        result.valid = false;
        result.error = e.what();
    }
    return result;
}

}  // namespace driftbench::scenarios
