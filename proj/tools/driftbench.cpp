// Command-line front end: run, compare, sweep-budget, export-dataset.
// Exit status: 0 success, 1 runtime failure, 2 configuration error.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "driftbench/data.hpp"
#include "driftbench/experiment.hpp"

namespace {

namespace ex = driftbench::experiment;
namespace fs = std::filesystem;

struct RunFlags {
    std::string config;
    std::string scenario;
    std::string strategy;
    std::optional<std::size_t> budget;
    std::optional<double> gamma;
    std::optional<std::size_t> mc_passes;
    std::optional<std::size_t> epochs;
    std::optional<double> lr;
    std::optional<double> momentum;
    std::optional<std::size_t> batch_size;
    std::optional<double> ewc_importance;
    std::optional<double> ewc_lr;
    std::optional<std::size_t> class_dataset;
    std::string seeds;
    std::string out;
    std::string name;
    std::size_t jobs = 1;
    bool forward_eval = false;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
    cmd->add_option("--config", f.config, "JSON experiment config");
    cmd->add_option("--scenario", f.scenario, "d | c | dc");
    cmd->add_option("--strategy", f.strategy, "uacl | finetune | ewc | icarl | upperbound");
    cmd->add_option("--budget", f.budget, "exemplar memory size K");
    cmd->add_option("--gamma", f.gamma, "distillation weight");
    cmd->add_option("--mc-passes", f.mc_passes, "MC dropout passes T");
    cmd->add_option("--epochs", f.epochs, "epochs per task");
    cmd->add_option("--lr", f.lr, "learning rate");
    cmd->add_option("--momentum", f.momentum, "Nesterov momentum");
    cmd->add_option("--batch-size", f.batch_size, "minibatch size");
    cmd->add_option("--ewc-importance", f.ewc_importance, "EWC penalty multiplier");
    cmd->add_option("--ewc-lr", f.ewc_lr, "EWC learning rate");
    cmd->add_option("--class-dataset", f.class_dataset, "dataset index for the class stream");
    cmd->add_option("--seeds", f.seeds, "e.g. 1..5 or 1,4,9");
    cmd->add_option("--out", f.out, "output root (default $DRIFTBENCH_OUT or ./runs)");
    cmd->add_option("--name", f.name, "run directory name");
    cmd->add_option("--jobs", f.jobs, "seeds run concurrently");
    cmd->add_flag("--forward-eval", f.forward_eval, "also evaluate tasks not yet trained on");
}

ex::ExperimentConfig resolve(const RunFlags& f) {
    ex::ExperimentConfig cfg = f.config.empty() ? ex::ExperimentConfig{} : ex::load_experiment_config(f.config);
    if (!f.scenario.empty()) {
        const auto kind = driftbench::scenarios::parse_scenario(f.scenario);
        if (!kind) throw ex::ConfigError("unknown scenario '" + f.scenario + "'");
        cfg.scenario = *kind;
    }
    if (!f.strategy.empty()) {
        const auto kind = driftbench::strategies::parse_strategy(f.strategy);
        if (!kind) throw ex::ConfigError("unknown strategy '" + f.strategy + "'");
        cfg.strategy = *kind;
    }
    auto& s = cfg.strategy_config;
    if (f.budget) s.budget = *f.budget;
    if (f.gamma) s.gamma = *f.gamma;
    if (f.mc_passes) s.mc_passes = *f.mc_passes;
    if (f.epochs) s.epochs = *f.epochs;
    if (f.lr) s.learning_rate = *f.lr;
    if (f.momentum) s.momentum = *f.momentum;
    if (f.batch_size) s.batch_size = *f.batch_size;
    if (f.ewc_importance) s.ewc_importance = *f.ewc_importance;
    if (f.ewc_lr) s.ewc_learning_rate = *f.ewc_lr;
    if (f.class_dataset) cfg.class_dataset = *f.class_dataset;
    if (!f.seeds.empty()) cfg.seeds = ex::parse_seed_list(f.seeds);
    if (!f.name.empty()) cfg.run_name = f.name;
    if (f.forward_eval) cfg.forward_eval = true;
    cfg.jobs = f.jobs;
    if (!f.out.empty() || cfg.output_root.empty()) cfg.output_root = ex::resolve_output_root(f.out);
    cfg.validate();
    return cfg;
}

std::vector<std::size_t> parse_budgets(const std::string& text) {
    std::vector<std::size_t> out;
    for (const auto seed : ex::parse_seed_list(text)) out.push_back(static_cast<std::size_t>(seed));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"driftbench: rehearsal-based continual learning benchmark"};
    app.require_subcommand(1);

    RunFlags run_flags;
    auto* run = app.add_subcommand("run", "train a strategy through a scenario for every seed");
    add_run_flags(run, run_flags);

    RunFlags sweep_flags;
    std::string k_values = "0,50,250,1000";
    auto* sweep = app.add_subcommand("sweep-budget", "average accuracy as a function of the memory budget K");
    add_run_flags(sweep, sweep_flags);
    sweep->add_option("--k-values", k_values, "comma-separated K values");

    std::vector<std::string> compare_dirs;
    std::string compare_out;
    auto* compare = app.add_subcommand("compare", "tabulate final metrics of completed runs");
    compare->add_option("runs", compare_dirs, "run directories")->required();
    compare->add_option("--csv", compare_out, "also write the table as CSV");

    std::string export_config;
    std::string export_out = "datasets";
    std::uint64_t export_seed = 1;
    auto* export_cmd = app.add_subcommand("export-dataset", "write the synthetic datasets as CSV plus manifests");
    export_cmd->add_option("--config", export_config, "JSON experiment config (synthetic section)");
    export_cmd->add_option("--seed", export_seed, "generation seed");
    export_cmd->add_option("--out", export_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*run) {
            const auto cfg = resolve(run_flags);
            const auto summary = ex::cmd_run(cfg);
            std::cout << "wrote " << summary.runs.size() << " seed run(s) to " << summary.run_dir.string() << '\n';
            if (!summary.all_valid) {
                std::cerr << "one or more seeds failed; see INVALID markers\n";
                return 1;
            }
        } else if (*sweep) {
            const auto cfg = resolve(sweep_flags);
            const auto rows = ex::cmd_sweep_budget(cfg, parse_budgets(k_values));
            std::cout << ex::sweep_csv(rows);
        } else if (*compare) {
            std::vector<fs::path> dirs(compare_dirs.begin(), compare_dirs.end());
            const auto rows = ex::cmd_compare(dirs);
            std::cout << ex::comparison_table(rows);
            if (!compare_out.empty()) ex::write_text(compare_out, ex::comparison_csv(rows));
        } else if (*export_cmd) {
            const ex::ExperimentConfig cfg =
                export_config.empty() ? ex::ExperimentConfig{} : ex::load_experiment_config(export_config);
            fs::create_directories(export_out);
            for (auto& ds : driftbench::data::make_synthetic_datasets(cfg.synthetic, export_seed)) {
                const fs::path csv = fs::path(export_out) / (ds.name + ".csv");
                driftbench::data::write_csv_dataset(csv, ds);
                ds.provenance = csv.string();
                ex::write_text(fs::path(export_out) / (ds.name + ".manifest.json"),
                               driftbench::data::dataset_manifest(ds).dump(2) + "\n");
                std::cout << csv.string() << '\n';
            }
        }
    } catch (const ex::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
