#ifndef DRIFTBENCH_EXPERIMENT_HPP
#define DRIFTBENCH_EXPERIMENT_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "driftbench/data.hpp"
#include "driftbench/metrics.hpp"
#include "driftbench/scenarios.hpp"
#include "driftbench/strategies.hpp"

namespace driftbench::experiment {

/// Invalid user configuration; the CLI maps it to exit status 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CsvSource {
    std::filesystem::path path;
    std::filesystem::path manifest;  // optional dataset manifest supplying class names
};

struct ExperimentConfig {
    scenarios::ScenarioKind scenario = scenarios::ScenarioKind::DomainClass;
    data::SyntheticConfig synthetic;
    std::vector<CsvSource> csv;  // replaces the synthetic datasets when non-empty
    std::vector<std::vector<std::size_t>> schedules;     // per dataset; defaults from class counts
    std::vector<std::vector<std::size_t>> class_orders;  // per dataset; native order when empty
    std::size_t class_dataset = 0;  // dataset used by the single-dataset class stream
    scenarios::AlignmentMap alignment;
    double train_fraction = 0.75;
    strategies::StrategyKind strategy = strategies::StrategyKind::Uacl;
    strategies::StrategyConfig strategy_config;
    std::vector<std::uint64_t> seeds{1};
    bool forward_eval = false;
    std::filesystem::path output_root;
    std::string run_name;  // "<scenario>_<strategy>" when empty
    std::size_t jobs = 1;

    /// Throws ConfigError.
    void validate() const;
    std::filesystem::path run_dir() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Throws ConfigError on malformed documents.
ExperimentConfig experiment_config_from_json(const nlohmann::json& doc);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// "1..5", "3,7,9", or a mix such as "1..3,8".
std::vector<std::uint64_t> parse_seed_list(std::string_view text);

/// 13 -> 3,3,3,4 and 10 -> 3,2,2,3; otherwise four tasks (fewer for tiny
/// datasets) with the remainder spread over the leading tasks.
std::vector<std::size_t> default_schedule(std::size_t n_classes);

/// --out flag, else $DRIFTBENCH_OUT, else ./runs.
std::filesystem::path resolve_output_root(const std::string& flag);

std::vector<data::Dataset> load_datasets(const ExperimentConfig& cfg, std::uint64_t seed);
scenarios::ScenarioPlan prepare_plan(const ExperimentConfig& cfg, std::uint64_t seed);
strategies::StrategyConfig seeded_strategy_config(const ExperimentConfig& cfg, std::uint64_t seed);

struct SeedRun {
    std::uint64_t seed = 0;
    scenarios::RunResult result;
};

SeedRun run_seed(const ExperimentConfig& cfg, std::uint64_t seed);

/// Runs every seed (up to cfg.jobs concurrently), in seed order.
std::vector<SeedRun> run_seeds(const ExperimentConfig& cfg);

struct MetricsRow {
    std::string strategy;
    std::string scenario;
    std::uint64_t seed = 0;
    std::size_t after_task = 0;
    double avg_accuracy = 0.0;
    std::optional<double> avg_forgetting;  // undefined after the first task
};

std::vector<MetricsRow> metrics_rows(const ExperimentConfig& cfg, const SeedRun& run);

std::string accuracy_matrix_csv(const metrics::AccuracyMatrix& matrix);
std::string metrics_csv(const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> parse_metrics_csv(const std::filesystem::path& path);

struct RunSummary {
    std::filesystem::path run_dir;
    std::vector<SeedRun> runs;
    bool all_valid = true;
};

/// Runs all seeds and writes the artifacts under cfg.run_dir().
RunSummary cmd_run(const ExperimentConfig& cfg);

struct ComparisonRow {
    std::string strategy;
    metrics::MeanSd accuracy;
    metrics::MeanSd forgetting;
};

/// Final-task metrics per run directory. Throws ConfigError when a metrics
/// file is missing or the runs cover different scenarios.
std::vector<ComparisonRow> cmd_compare(const std::vector<std::filesystem::path>& run_dirs);
std::string comparison_csv(const std::vector<ComparisonRow>& rows);
std::string comparison_table(const std::vector<ComparisonRow>& rows);

struct SweepRow {
    std::size_t budget = 0;
    metrics::MeanSd accuracy;
};

/// Final-task average accuracy per budget value, one row per K. Artifacts of
/// every budget go to run_dir()/K_<k>.
std::vector<SweepRow> cmd_sweep_budget(const ExperimentConfig& cfg, const std::vector<std::size_t>& budgets,
                                       bool write_artifacts = true);
std::string sweep_csv(const std::vector<SweepRow>& rows);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace driftbench::experiment

#endif  // DRIFTBENCH_EXPERIMENT_HPP
