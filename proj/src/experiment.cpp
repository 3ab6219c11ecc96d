#include "driftbench/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <future>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "driftbench/checkpoint.hpp"

namespace driftbench::experiment {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buffer[32];
    const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), v);
    return std::string(buffer, ptr);
}

std::vector<std::string> split(std::string_view text, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = text.find(sep, start);
        out.emplace_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::string trimmed(std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::uint64_t parse_u64(std::string_view text) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
        throw ConfigError("not a non-negative integer: '" + std::string(text) + "'");
    }
    return v;
}

void write_seed_artifacts(const ExperimentConfig& cfg, const fs::path& dir, const SeedRun& run) {
    fs::create_directories(dir);
    const auto& result = run.result;
    write_text(dir / "accuracy_matrix.csv", accuracy_matrix_csv(result.matrix));
    write_text(dir / "metrics.csv", metrics_csv(metrics_rows(cfg, run)));
    if (!result.forward.empty()) {
        std::string text = "after_task,eval_task,accuracy\n";
        for (const auto& f : result.forward) {
            text += std::to_string(f.after_task) + ',' + std::to_string(f.eval_task) + ',' +
                    format_double(f.accuracy) + '\n';
        }
        write_text(dir / "forward_eval.csv", text);
    }
    for (const auto& record : result.records) {
        const std::string stem = "task_" + std::to_string(record.task_id);
        const fs::path checkpoint_path = dir / ("checkpoint_" + stem + ".json");
        nn::save_checkpoint(checkpoint_path, {record.network, {}});
        json outcome = {{"task_id", record.task_id},
                        {"strategy", strategies::strategy_name(cfg.strategy)},
                        {"seed", run.seed},
                        {"accuracies", record.accuracies},
                        {"checkpoint_hash", nn::hex_digest(record.checkpoint_hash)},
                        {"checkpoint_path", checkpoint_path.filename().string()},
                        {"exemplar_manifest_hash", nullptr}};
        if (record.exemplar_manifest) {
            const std::string manifest = record.exemplar_manifest->dump(1);
            write_text(dir / ("exemplars_" + stem + ".json"), manifest + "\n");
            outcome["exemplar_manifest_hash"] = nn::hex_digest(fnv1a(manifest));
        }
        write_text(dir / (stem + ".json"), outcome.dump(1) + "\n");
    }
    if (!result.valid) {
        write_text(dir / "INVALID", result.error + "\n");
    }
}

struct FinalMetrics {
    std::vector<double> accuracy;
    std::vector<double> forgetting;
};

FinalMetrics final_metrics(const std::vector<MetricsRow>& rows) {
    std::map<std::uint64_t, const MetricsRow*> last;
    for (const auto& row : rows) {
        auto& slot = last[row.seed];
        if (slot == nullptr || row.after_task > slot->after_task) slot = &row;
    }
    FinalMetrics out;
    for (const auto& [seed, row] : last) {
        out.accuracy.push_back(row->avg_accuracy);
        out.forgetting.push_back(row->avg_forgetting.value_or(std::nan("")));
    }
    return out;
}

}  // namespace

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << text;
}

void ExperimentConfig::validate() const {
    try {
        strategy_config.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (seeds.empty()) throw ConfigError("at least one seed is required");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train fraction must lie in (0, 1)");
    if (jobs == 0) throw ConfigError("jobs must be positive");
    const std::size_t n_datasets = csv.empty() ? synthetic.domains : csv.size();
    if (n_datasets == 0) throw ConfigError("no datasets configured");
    if (!schedules.empty() && schedules.size() != n_datasets) {
        throw ConfigError("schedules must list one entry per dataset");
    }
    if (!class_orders.empty() && class_orders.size() != n_datasets) {
        throw ConfigError("class_orders must list one entry per dataset");
    }
    if (scenario == scenarios::ScenarioKind::Class && class_dataset >= n_datasets) {
        throw ConfigError("class_dataset index out of range");
    }
    if (scenario == scenarios::ScenarioKind::Domain && n_datasets < 2) {
        throw ConfigError("the domain-incremental stream needs at least two datasets");
    }
}

fs::path ExperimentConfig::run_dir() const {
    const std::string name = run_name.empty()
                                 ? std::string(scenarios::scenario_name(scenario)) + "_" +
                                       std::string(strategies::strategy_name(strategy))
                                 : run_name;
    return output_root / name;
}

json to_json(const ExperimentConfig& cfg) {
    json csv = json::array();
    for (const auto& c : cfg.csv) csv.push_back({{"path", c.path.string()}, {"manifest", c.manifest.string()}});
    return {{"scenario", scenarios::scenario_name(cfg.scenario)},
            {"synthetic", data::to_json(cfg.synthetic)},
            {"csv", csv},
            {"schedules", cfg.schedules},
            {"class_orders", cfg.class_orders},
            {"class_dataset", cfg.class_dataset},
            {"alignment", cfg.alignment},
            {"train_fraction", cfg.train_fraction},
            {"strategy", strategies::strategy_name(cfg.strategy)},
            {"strategy_config", strategies::to_json(cfg.strategy_config)},
            {"seeds", cfg.seeds},
            {"forward_eval", cfg.forward_eval},
            {"run_name", cfg.run_name}};
}

ExperimentConfig experiment_config_from_json(const json& doc) {
    try {
        ExperimentConfig cfg;
        if (doc.contains("scenario")) {
            const auto kind = scenarios::parse_scenario(doc.at("scenario").get<std::string>());
            if (!kind) throw ConfigError("unknown scenario '" + doc.at("scenario").get<std::string>() + "'");
            cfg.scenario = *kind;
        }
        if (doc.contains("synthetic")) cfg.synthetic = data::synthetic_config_from_json(doc.at("synthetic"));
        for (const auto& c : doc.value("csv", json::array())) {
            cfg.csv.push_back({c.at("path").get<std::string>(), c.value("manifest", std::string())});
        }
        cfg.schedules = doc.value("schedules", cfg.schedules);
        cfg.class_orders = doc.value("class_orders", cfg.class_orders);
        cfg.class_dataset = doc.value("class_dataset", cfg.class_dataset);
        cfg.alignment = doc.value("alignment", cfg.alignment);
        cfg.train_fraction = doc.value("train_fraction", cfg.train_fraction);
        if (doc.contains("strategy")) {
            const auto kind = strategies::parse_strategy(doc.at("strategy").get<std::string>());
            if (!kind) throw ConfigError("unknown strategy '" + doc.at("strategy").get<std::string>() + "'");
            cfg.strategy = *kind;
        }
        if (doc.contains("strategy_config")) {
            cfg.strategy_config = strategies::strategy_config_from_json(doc.at("strategy_config"));
        }
        cfg.seeds = doc.value("seeds", cfg.seeds);
        cfg.forward_eval = doc.value("forward_eval", cfg.forward_eval);
        cfg.run_name = doc.value("run_name", cfg.run_name);
        if (doc.contains("output")) cfg.output_root = doc.at("output").get<std::string>();
        return cfg;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
}

ExperimentConfig load_experiment_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return experiment_config_from_json(doc);
}

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
    std::vector<std::uint64_t> seeds;
    for (const auto& raw : split(text, ',')) {
        const std::string part = trimmed(raw);
        if (part.empty()) throw ConfigError("empty entry in seed list");
        const auto dots = part.find("..");
        if (dots == std::string::npos) {
            seeds.push_back(parse_u64(part));
            continue;
        }
        const auto lo = parse_u64(std::string_view(part).substr(0, dots));
        const auto hi = parse_u64(std::string_view(part).substr(dots + 2));
        if (hi < lo) throw ConfigError("descending seed range " + part);
        for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
    }
    if (seeds.empty()) throw ConfigError("seed list is empty");
    return seeds;
}

std::vector<std::size_t> default_schedule(std::size_t n_classes) {
    if (n_classes == 13) return {3, 3, 3, 4};
    if (n_classes == 10) return {3, 2, 2, 3};
    if (n_classes < 2) return {n_classes};
    // the first task needs two classes for a non-trivial softmax
    const std::size_t tasks = std::min<std::size_t>(4, n_classes - 1);
    std::vector<std::size_t> out(tasks, n_classes / tasks);
    for (std::size_t i = 0; i < n_classes % tasks; ++i) ++out[i];
    return out;
}

fs::path resolve_output_root(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("DRIFTBENCH_OUT"); env != nullptr && *env != '\0') return env;
    return "runs";
}

std::vector<data::Dataset> load_datasets(const ExperimentConfig& cfg, std::uint64_t seed) {
    if (cfg.csv.empty()) {
        try {
            return data::make_synthetic_datasets(cfg.synthetic, derive_seed(seed, "data"));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    std::vector<data::Dataset> out;
    for (const auto& source : cfg.csv) {
        data::CsvSchema schema;
        if (!source.manifest.empty()) {
            std::ifstream in(source.manifest);
            if (!in) throw ConfigError("cannot open dataset manifest " + source.manifest.string());
            const json manifest = json::parse(in);
            schema.class_names = manifest.at("class_names").get<std::vector<std::string>>();
            schema.name = manifest.value("name", std::string());
        }
        try {
            out.push_back(data::load_csv_dataset(source.path, schema));
        } catch (const data::CsvError& e) {
            throw ConfigError(e.what());
        }
    }
    return out;
}

scenarios::ScenarioPlan prepare_plan(const ExperimentConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::vector<data::Dataset> datasets = load_datasets(cfg, seed);
    std::vector<scenarios::SplitDataset> split;
    for (std::size_t d = 0; d < datasets.size(); ++d) {
        try {
            datasets[d].validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        data::Split s = data::stratified_split(datasets[d], cfg.train_fraction, derive_seed(seed, "split", d));
        split.push_back({std::move(datasets[d]), std::move(s)});
    }
    std::vector<std::vector<std::size_t>> schedules = cfg.schedules;
    if (schedules.empty()) {
        for (const auto& sd : split) schedules.push_back(default_schedule(sd.dataset.class_names.size()));
    }
    try {
        scenarios::ScenarioPlan plan;
        switch (cfg.scenario) {
            case scenarios::ScenarioKind::Domain:
                plan = scenarios::build_domain_incremental(split, cfg.alignment);
                break;
            case scenarios::ScenarioKind::Class: {
                const auto& order = cfg.class_orders.empty() ? std::vector<std::size_t>{}
                                                             : cfg.class_orders[cfg.class_dataset];
                plan = scenarios::build_class_incremental(split[cfg.class_dataset], schedules[cfg.class_dataset], order);
                break;
            }
            case scenarios::ScenarioKind::DomainClass:
                plan = scenarios::build_domain_class_incremental(split, schedules, cfg.alignment, cfg.class_orders);
                break;
        }
        plan.forward_eval = cfg.forward_eval;
        return plan;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

strategies::StrategyConfig seeded_strategy_config(const ExperimentConfig& cfg, std::uint64_t seed) {
    strategies::StrategyConfig out = cfg.strategy_config;
    out.seed = derive_seed(seed, "strategy");
    return out;
}

SeedRun run_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
    const scenarios::ScenarioPlan plan = prepare_plan(cfg, seed);
    return {seed, scenarios::run_scenario(plan, cfg.strategy, seeded_strategy_config(cfg, seed))};
}

std::vector<SeedRun> run_seeds(const ExperimentConfig& cfg) {
    cfg.validate();
    std::vector<SeedRun> out;
    out.reserve(cfg.seeds.size());
    for (std::size_t start = 0; start < cfg.seeds.size(); start += cfg.jobs) {
        const std::size_t end = std::min(cfg.seeds.size(), start + cfg.jobs);
        std::vector<std::future<SeedRun>> pending;
        for (std::size_t i = start; i < end; ++i) {
            pending.push_back(std::async(std::launch::async, run_seed, std::cref(cfg), cfg.seeds[i]));
        }
        for (auto& f : pending) out.push_back(f.get());
    }
    return out;
}

std::vector<MetricsRow> metrics_rows(const ExperimentConfig& cfg, const SeedRun& run) {
    std::vector<MetricsRow> rows;
    const auto& matrix = run.result.matrix;
    for (std::size_t k = 1; k <= matrix.completed_rows(); ++k) {
        MetricsRow row;
        row.strategy = strategies::strategy_name(cfg.strategy);
        row.scenario = scenarios::scenario_name(cfg.scenario);
        row.seed = run.seed;
        row.after_task = k;
        row.avg_accuracy = metrics::average_accuracy(matrix, k);
        if (k >= 2) row.avg_forgetting = metrics::average_forgetting(matrix, k);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string accuracy_matrix_csv(const metrics::AccuracyMatrix& matrix) {
    std::string text = "after_task,eval_task,accuracy\n";
    for (std::size_t k = 1; k <= matrix.tasks(); ++k) {
        for (std::size_t j = 1; j <= k; ++j) {
            if (!matrix.has(k, j)) continue;
            text += std::to_string(k) + ',' + std::to_string(j) + ',' + format_double(matrix.at(k, j)) + '\n';
        }
    }
    return text;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
    std::string text = "strategy,scenario,seed,after_task,avg_accuracy,avg_forgetting\n";
    for (const auto& r : rows) {
        text += r.strategy + ',' + r.scenario + ',' + std::to_string(r.seed) + ',' + std::to_string(r.after_task) +
                ',' + format_double(r.avg_accuracy) + ',' +
                (r.avg_forgetting ? format_double(*r.avg_forgetting) : std::string()) + '\n';
    }
    return text;
}

std::vector<MetricsRow> parse_metrics_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("missing metrics file " + path.string());
    std::string line;
    std::getline(in, line);
    if (trimmed(line) != "strategy,scenario,seed,after_task,avg_accuracy,avg_forgetting") {
        throw ConfigError("unexpected header in " + path.string());
    }
    std::vector<MetricsRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = trimmed(line);
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != 6) {
            throw ConfigError(path.string() + " line " + std::to_string(line_no) + ": expected 6 fields");
        }
        MetricsRow row;
        row.strategy = f[0];
        row.scenario = f[1];
        row.seed = parse_u64(f[2]);
        row.after_task = static_cast<std::size_t>(parse_u64(f[3]));
        try {
            row.avg_accuracy = std::stod(f[4]);
            if (!f[5].empty()) row.avg_forgetting = std::stod(f[5]);
        } catch (const std::exception&) {
            throw ConfigError(path.string() + " line " + std::to_string(line_no) + ": non-numeric metric");
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

RunSummary cmd_run(const ExperimentConfig& cfg) {
    cfg.validate();
    RunSummary summary;
    summary.run_dir = cfg.run_dir();
    fs::create_directories(summary.run_dir);
    write_text(summary.run_dir / "config.json", to_json(cfg).dump(2) + "\n");
    summary.runs = run_seeds(cfg);

    std::vector<MetricsRow> all_rows;
    json seeds = json::array();
    for (const auto& run : summary.runs) {
        write_seed_artifacts(cfg, summary.run_dir / ("seed_" + std::to_string(run.seed)), run);
        const auto rows = metrics_rows(cfg, run);
        all_rows.insert(all_rows.end(), rows.begin(), rows.end());
        summary.all_valid = summary.all_valid && run.result.valid;
        seeds.push_back({{"seed", run.seed}, {"valid", run.result.valid}, {"error", run.result.error}});
    }
    write_text(summary.run_dir / "metrics.csv", metrics_csv(all_rows));

    const FinalMetrics final = final_metrics(all_rows);
    json aggregate = {{"strategy", strategies::strategy_name(cfg.strategy)},
                      {"scenario", scenarios::scenario_name(cfg.scenario)},
                      {"seeds", seeds},
                      {"dispersion", "sample standard deviation across seeds"}};
    if (!final.accuracy.empty()) {
        const auto acc = metrics::mean_sd(final.accuracy);
        const auto forg = metrics::mean_sd(final.forgetting);
        aggregate["avg_accuracy"] = {{"mean", acc.mean}, {"sd", acc.sd}};
        aggregate["avg_forgetting"] = {{"mean", forg.mean}, {"sd", forg.sd}};
    }
    write_text(summary.run_dir / "summary.json", aggregate.dump(2) + "\n");
    return summary;
}

std::vector<ComparisonRow> cmd_compare(const std::vector<fs::path>& run_dirs) {
    if (run_dirs.size() < 2) throw ConfigError("compare needs at least two run directories");
    std::vector<ComparisonRow> out;
    std::optional<std::string> scenario;
    for (const auto& dir : run_dirs) {
        const auto rows = parse_metrics_csv(dir / "metrics.csv");
        if (rows.empty()) throw ConfigError("no completed tasks in " + (dir / "metrics.csv").string());
        const std::set<std::string> scenarios_seen = [&] {
            std::set<std::string> s;
            for (const auto& r : rows) s.insert(r.scenario);
            return s;
        }();
        if (scenarios_seen.size() != 1 || (scenario && *scenario != *scenarios_seen.begin())) {
            throw ConfigError("runs cover different scenarios; " + dir.string() + " has '" +
                              *scenarios_seen.begin() + "'" + (scenario ? ", expected '" + *scenario + "'" : ""));
        }
        scenario = *scenarios_seen.begin();
        const FinalMetrics final = final_metrics(rows);
        out.push_back({rows.front().strategy, metrics::mean_sd(final.accuracy), metrics::mean_sd(final.forgetting)});
    }
    return out;
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
    std::string text = "strategy,acc_mean,acc_sd,forg_mean,forg_sd\n";
    for (const auto& r : rows) {
        text += r.strategy + ',' + format_double(r.accuracy.mean) + ',' + format_double(r.accuracy.sd) + ',' +
                format_double(r.forgetting.mean) + ',' + format_double(r.forgetting.sd) + '\n';
    }
    return text;
}

std::string comparison_table(const std::vector<ComparisonRow>& rows) {
    std::ostringstream out;
    out << std::left << std::setw(12) << "strategy" << std::setw(18) << "avg accuracy" << "avg forgetting\n";
    out << std::fixed << std::setprecision(2);
    for (const auto& r : rows) {
        std::ostringstream acc, forg;
        acc << std::fixed << std::setprecision(2) << r.accuracy.mean << " +- " << r.accuracy.sd;
        forg << std::fixed << std::setprecision(2) << r.forgetting.mean << " +- " << r.forgetting.sd;
        out << std::setw(12) << r.strategy << std::setw(18) << acc.str() << forg.str() << '\n';
    }
    return out.str();
}

std::vector<SweepRow> cmd_sweep_budget(const ExperimentConfig& cfg, const std::vector<std::size_t>& budgets,
                                       bool write_artifacts) {
    if (budgets.empty()) throw ConfigError("sweep-budget needs at least one K value");
    cfg.validate();
    std::vector<SweepRow> out;
    for (const std::size_t k : budgets) {
        ExperimentConfig run_cfg = cfg;
        run_cfg.strategy_config.budget = k;
        std::vector<double> finals;
        if (write_artifacts) {
            run_cfg.output_root = cfg.run_dir();
            run_cfg.run_name = "K_" + std::to_string(k);
            const RunSummary summary = cmd_run(run_cfg);
            if (!summary.all_valid) throw std::runtime_error("sweep run at K=" + std::to_string(k) + " failed");
            for (const auto& run : summary.runs) {
                finals.push_back(metrics::average_accuracy(run.result.matrix, run.result.matrix.tasks()));
            }
        } else {
            for (const auto& run : run_seeds(run_cfg)) {
                if (!run.result.valid) throw std::runtime_error("sweep run failed: " + run.result.error);
                finals.push_back(metrics::average_accuracy(run.result.matrix, run.result.matrix.tasks()));
            }
        }
        out.push_back({k, metrics::mean_sd(finals)});
    }
    if (write_artifacts) {
        write_text(cfg.run_dir() / "budget_sweep.csv", sweep_csv(out));
    }
    return out;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::string text = "K,avg_accuracy_mean,avg_accuracy_sd\n";
    for (const auto& r : rows) {
        text += std::to_string(r.budget) + ',' + format_double(r.accuracy.mean) + ',' + format_double(r.accuracy.sd) +
                '\n';
    }
    return text;
}

}  // namespace driftbench::experiment
