// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "driftbench/exemplar.hpp"
#include "driftbench/experiment.hpp"
#include "driftbench/metrics.hpp"
#include "driftbench/nn.hpp"
#include "driftbench/scenarios.hpp"
#include "driftbench/strategies.hpp"
#include "support.hpp"

using namespace driftbench;
using nn::Matrix;
using nn::Network;
using nn::Vector;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- 1

Verdict gradient_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(20240601);
    std::uniform_int_distribution<std::size_t> width(3, 8), depth(2, 4), outs(2, 6), in(2, 6);
    double worst = 0.0;
    const int nets = 20;
    for (int trial = 0; trial < nets; ++trial) {
        std::vector<std::size_t> hidden(depth(rng));
        for (auto& h : hidden) h = width(rng);
        const std::size_t input = in(rng), out = outs(rng);
        const std::size_t prev_out = std::uniform_int_distribution<std::size_t>(1, out)(rng);
        const Network net = testsupport::random_network(rng, input, hidden, out, 0.3, 1);
        const Network prev = testsupport::random_network(rng, input, hidden, prev_out);
        const Eigen::Index batch = 4;
        const Matrix x = testsupport::random_matrix(static_cast<Eigen::Index>(input), batch, rng);
        std::vector<std::size_t> labels(static_cast<std::size_t>(batch));
        for (auto& l : labels) l = std::uniform_int_distribution<std::size_t>(0, out - 1)(rng);
        Rng mask_rng(static_cast<std::uint64_t>(trial) + 7);
        const Matrix mask = nn::sample_dropout_mask(net, batch, mask_rng);
        const Matrix old_logits = nn::forward(prev, x).logits();

        // Each term through the public pieces with a frozen mask.
        auto term = [&](const Network& n, bool cls, bool dist, Matrix* dlogits) {
            const nn::ForwardTrace tr = nn::forward_with_mask(n, x, mask);
            const Matrix& z = tr.logits();
            double loss = 0.0;
            if (dlogits) *dlogits = Matrix::Zero(z.rows(), z.cols());
            for (Eigen::Index c = 0; c < batch; ++c) {
                if (cls) {
                    const auto lg = nn::classification_loss(z.col(c), labels[static_cast<std::size_t>(c)]);
                    loss += lg.loss;
                    if (dlogits) dlogits->col(c) += lg.grad / static_cast<double>(batch);
                }
                if (dist) {
                    const auto lg = nn::distillation_loss(old_logits.col(c), z.col(c));
                    loss += lg.loss;
                    if (dlogits) dlogits->col(c) += lg.grad / static_cast<double>(batch);
                }
            }
            return loss / static_cast<double>(batch);
        };
        for (const auto [cls, dist] : {std::pair{true, false}, std::pair{false, true}}) {
            Matrix dl;
            term(net, cls, dist, &dl);
            const auto analytic = nn::backward(net, nn::forward_with_mask(net, x, mask), dl);
            const auto loss = [&](const Network& n) { return term(n, cls, dist, nullptr); };
            worst = std::max(worst, testsupport::fd_relative_error(net, loss, analytic));
        }
        const double gamma = 0.5 + static_cast<double>(trial) * 0.1;
        const std::uint64_t seed = 1000 + static_cast<std::uint64_t>(trial);
        const auto combined = [&](const Network& n) {
            Rng r(seed);
            return nn::total_loss_and_grads(n, &prev, x, labels, gamma, r).loss;
        };
        Rng r(seed);
        const auto bl = nn::total_loss_and_grads(net, &prev, x, labels, gamma, r);
        worst = std::max(worst, testsupport::fd_relative_error(net, combined, bl.grads));
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-6 && secs < 30.0,
            fmt("%d nets, worst relative error %.3e (< 1e-6), %.2fs (< 30s)", nets, worst, secs)};
}

// ---------------------------------------------------------------- 2

Verdict herding_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(77);
    int mismatches = 0;
    const int classes = 200;
    for (int trial = 0; trial < classes; ++trial) {
        const auto n = std::uniform_int_distribution<Eigen::Index>(1, 8)(rng);
        const auto d = std::uniform_int_distribution<Eigen::Index>(1, 5)(rng);
        Matrix f = testsupport::random_matrix(d, n, rng);
        if (trial % 4 == 0) f = f.array().round();  // coarse grid: exercises ties
        std::vector<std::vector<double>> pts;
        for (Eigen::Index c = 0; c < n; ++c) pts.emplace_back(f.col(c).data(), f.col(c).data() + d);
        std::vector<memory::SampleId> ids(static_cast<std::size_t>(n));
        std::iota(ids.begin(), ids.end(), 10);
        std::shuffle(ids.begin(), ids.end(), rng);
        const auto count = std::uniform_int_distribution<std::size_t>(0, static_cast<std::size_t>(n))(rng);
        const auto expected = trial % 4 == 0 ? testsupport::herding_oracle_exact(pts, ids, count)
                                             : testsupport::herding_oracle(pts, ids, count);
        if (memory::herding_order(f, ids, count) != expected) ++mismatches;
    }
    const double secs = seconds_since(t0);
    return {mismatches == 0 && secs < 10.0,
            fmt("%d classes of size <= 8, %d mismatches, %.2fs (< 10s)", classes, mismatches, secs)};
}

// ---------------------------------------------------------------- 3

Verdict uncertainty_invariants() {
    Rng rng(5);
    Network net = testsupport::random_network(rng, 6, {24, 24, 24}, 4, 0.25, 1);
    const Matrix x = testsupport::random_matrix(6, 40, rng);
    std::vector<memory::SampleId> ids(40);
    std::iota(ids.begin(), ids.end(), 0);

    Network off = net;
    off.dropout_rate = 0.0;
    const auto zero = memory::mc_dropout_uncertainty(off, x, ids, 10, 3);
    const bool all_zero = std::all_of(zero.begin(), zero.end(), [](double u) { return u == 0.0; });

    Matrix runs(2, 2);
    runs << 1, 0,
            0, 1;
    const double hand = memory::uncertainty_from_runs(runs);

    bool perm_ok = true;
    for (int trial = 0; trial < 100; ++trial) {
        const Matrix r = testsupport::random_matrix(10, 5, rng).array().abs();
        std::vector<Eigen::Index> perm(10);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Matrix p(10, 5);
        for (Eigen::Index k = 0; k < 10; ++k) p.row(k) = r.row(perm[static_cast<std::size_t>(k)]);
        perm_ok = perm_ok && memory::uncertainty_from_runs(p) == memory::uncertainty_from_runs(r);
    }
    const auto on = memory::mc_dropout_uncertainty(net, x, ids, 10, 3);
    const bool some_positive = std::any_of(on.begin(), on.end(), [](double u) { return u > 0.0; });
    return {all_zero && hand == 1.0 && perm_ok && some_positive,
            fmt("dropout off -> all zero: %s; hand case U = %.17g; pass permutation invariant: %s",
                all_zero ? "yes" : "no", hand, perm_ok ? "yes" : "no")};
}

// ---------------------------------------------------------------- 4

Verdict budget_safety() {
    std::string detail;
    bool ok = true;
    for (const std::size_t budget : {std::size_t{0}, std::size_t{17}, std::size_t{125}, std::size_t{1000}}) {
        experiment::ExperimentConfig cfg;
        cfg.scenario = scenarios::ScenarioKind::DomainClass;
        cfg.synthetic.classes = 13;
        cfg.synthetic.feature_dim = 8;
        cfg.synthetic.samples_per_class = 24;
        cfg.strategy_config.epochs = 1;
        cfg.strategy_config.hidden = {16, 16, 16};
        cfg.strategy_config.mc_passes = 3;
        cfg.strategy_config.budget = budget;
        const std::uint64_t seed = 300 + budget;
        // randomized class order per domain
        Rng order_rng(seed);
        for (std::size_t d = 0; d < 3; ++d) {
            std::vector<std::size_t> order(13);
            std::iota(order.begin(), order.end(), 0);
            std::shuffle(order.begin(), order.end(), order_rng);
            cfg.class_orders.push_back(order);
        }
        const auto plan = experiment::prepare_plan(cfg, seed);
        std::size_t peak = 0;
        bool run_ok = plan.tasks.size() == 12;
        for (const auto kind : {strategies::StrategyKind::Uacl, strategies::StrategyKind::Icarl}) {
            strategies::Learner learner(kind, experiment::seeded_strategy_config(cfg, seed), plan.input_dim);
            std::optional<memory::ExemplarSet> previous;
            for (std::size_t k = 0; k < plan.tasks.size(); ++k) {
                strategies::TaskInput input{k, {}, plan.tasks[k].new_classes};
                for (const auto id : plan.tasks[k].train) input.train.push_back(&plan.store.at(id));
                if (previous) {
                    const std::size_t n = previous->n_classes + input.new_classes.size();
                    const auto reduced = memory::reduce_exemplar_set(*previous, n);
                    const auto q = reduced.quota();
                    run_ok = run_ok && reduced.total_size() <= budget;
                    for (const auto& [c, ce] : reduced.classes) run_ok = run_ok && ce.size() <= q.per_class;
                }
                learner.train_task(input, plan.store);
                const auto& set = *learner.exemplars();
                const auto q = set.quota();
                run_ok = run_ok && set.total_size() <= budget && set.n_classes == learner.network().output_dim();
                for (const auto& [c, ce] : set.classes) {
                    run_ok = run_ok && ce.size() <= q.per_class && ce.herded.size() <= q.herding &&
                             ce.uncertain.size() <= q.uncertainty;
                }
                peak = std::max(peak, set.total_size());
                previous = set;
            }
        }
        ok = ok && run_ok;
        detail += fmt("K=%zu peak %zu%s; ", budget, peak, run_ok ? "" : " VIOLATION");
    }
    return {ok, "12-task DC streams, uacl+icarl: " + detail};
}

// ---------------------------------------------------------------- 5

Verdict metric_oracles() {
    metrics::AccuracyMatrix a(2);
    a.set(1, 1, 0.9);
    a.set(2, 1, 0.7);
    a.set(2, 2, 0.8);
    const double acc = metrics::average_accuracy(a, 2);
    const double forg = metrics::average_forgetting(a, 2);
    const double acc1 = metrics::average_accuracy(a, 1);

    // a[k][j] = max_{l<k} a[l][j]: never degrading
    metrics::AccuracyMatrix flat(4);
    Rng rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t j = 1; j <= 4; ++j) {
        const double v = u(rng);
        for (std::size_t k = j; k <= 4; ++k) flat.set(k, j, v);
    }
    bool flat_zero = true;
    for (std::size_t k = 2; k <= 4; ++k) flat_zero = flat_zero && metrics::average_forgetting(flat, k) == 0.0;

    // backward transfer is reported unclamped
    metrics::AccuracyMatrix up(2);
    up.set(1, 1, 0.5);
    up.set(2, 1, 0.75);
    up.set(2, 2, 1.0);
    const double negative = metrics::average_forgetting(up, 2);

    const bool ok = acc == (0.7 + 0.8) / 2.0 && forg == 0.9 - 0.7 && acc1 == 0.9 && flat_zero && negative == -0.25;
    return {ok, fmt("avg acc (0.7,0.8) = %.17g, forgetting 0.9->0.7 = %.17g, never-degrading = 0: %s, "
                    "backward transfer = %.17g",
                    acc, forg, flat_zero ? "yes" : "no", negative)};
}

// ---------------------------------------------------------------- 6

Verdict degenerate_equivalence() {
    experiment::ExperimentConfig cfg;
    cfg.synthetic.samples_per_class = 60;
    cfg.strategy_config.epochs = 5;
    cfg.strategy_config.budget = 0;
    cfg.strategy_config.gamma = 0.0;
    const std::uint64_t seed = 11;
    const auto plan = experiment::prepare_plan(cfg, seed);
    const auto scfg = experiment::seeded_strategy_config(cfg, seed);
    const auto uacl = scenarios::run_scenario(plan, strategies::StrategyKind::Uacl, scfg);
    const auto ft = scenarios::run_scenario(plan, strategies::StrategyKind::Finetune, scfg);
    bool same = uacl.valid && ft.valid && uacl.records.size() == ft.records.size();
    for (std::size_t k = 0; same && k < uacl.records.size(); ++k) same = uacl.records[k].network == ft.records[k].network;
    return {same && uacl.matrix == ft.matrix,
            fmt("%zu tasks, parameters bit-identical after every task: %s", uacl.records.size(),
                same ? "yes" : "no")};
}

// ---------------------------------------------------------------- 7, 8

struct Aggregate {
    double acc = 0.0;
    double forg = 0.0;
};

Aggregate final_metrics(const std::vector<experiment::SeedRun>& runs, bool& valid) {
    std::vector<double> acc, forg;
    for (const auto& r : runs) {
        valid = valid && r.result.valid;
        if (!r.result.valid) continue;
        const std::size_t k = r.result.matrix.tasks();
        acc.push_back(metrics::average_accuracy(r.result.matrix, k));
        forg.push_back(metrics::average_forgetting(r.result.matrix, k));
    }
    if (acc.empty()) return {};
    return {metrics::mean_sd(acc).mean, metrics::mean_sd(forg).mean};
}

experiment::ExperimentConfig reference_config(strategies::StrategyKind kind, std::size_t budget) {
    experiment::ExperimentConfig cfg;  // 3 domains x 5 classes x 200 samples, default net
    cfg.scenario = scenarios::ScenarioKind::DomainClass;
    cfg.strategy = kind;
    cfg.strategy_config.budget = budget;
    cfg.strategy_config.gamma = 1.0;
    cfg.strategy_config.mc_passes = 10;
    cfg.seeds = {1, 2, 3, 4, 5};
    return cfg;
}

Aggregate uacl_reference;  // shared by 7 and 8
bool uacl_reference_valid = true;

Verdict directional_ordering() {
    const auto t0 = std::chrono::steady_clock::now();
    bool valid = true;
    uacl_reference = final_metrics(experiment::run_seeds(reference_config(strategies::StrategyKind::Uacl, 1000)),
                                   uacl_reference_valid);
    const auto icarl =
        final_metrics(experiment::run_seeds(reference_config(strategies::StrategyKind::Icarl, 1000)), valid);
    const auto ft =
        final_metrics(experiment::run_seeds(reference_config(strategies::StrategyKind::Finetune, 1000)), valid);
    const auto& u = uacl_reference;
    valid = valid && uacl_reference_valid;
    const bool ok = valid && u.acc > icarl.acc && icarl.acc > ft.acc && u.acc >= ft.acc + 0.05 && u.forg < ft.forg;
    return {ok, fmt("DC, 5 seeds: acc uacl %.4f > icarl %.4f > finetune %.4f (margin %.4f >= 0.05); "
                    "forgetting uacl %.4f < finetune %.4f; %.0fs",
                    u.acc, icarl.acc, ft.acc, u.acc - ft.acc, u.forg, ft.forg, seconds_since(t0))};
}

Verdict budget_plateau() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<std::size_t> budgets{0, 50, 250, 1000};
    std::vector<double> ks, accs;
    bool valid = uacl_reference_valid;
    for (const auto k : budgets) {
        double acc = uacl_reference.acc;
        if (k != 1000) acc = final_metrics(experiment::run_seeds(reference_config(strategies::StrategyKind::Uacl, k)), valid).acc;
        ks.push_back(static_cast<double>(k));
        accs.push_back(acc);
    }
    const double rho = testsupport::spearman(ks, accs);
    const double top_gap = std::abs(accs[3] - accs[2]);
    std::string curve;
    for (std::size_t i = 0; i < budgets.size(); ++i) curve += fmt("K=%zu %.4f ", budgets[i], accs[i]);
    return {valid && rho > 0.8 && top_gap < 0.03,
            fmt("%sspearman %.3f (> 0.8), top-two gap %.4f (< 0.03); %.0fs", curve.c_str(), rho, top_gap,
                seconds_since(t0))};
}

// ---------------------------------------------------------------- 9

Verdict determinism() {
    experiment::ExperimentConfig cfg;
    cfg.synthetic.samples_per_class = 60;
    cfg.strategy_config.epochs = 5;
    cfg.strategy_config.budget = 60;
    bool same = true;
    std::size_t runs = 0;
    for (const auto kind : {strategies::StrategyKind::Uacl, strategies::StrategyKind::Icarl,
                            strategies::StrategyKind::Ewc, strategies::StrategyKind::Finetune,
                            strategies::StrategyKind::UpperBound}) {
        cfg.strategy = kind;
        const auto a = experiment::run_seed(cfg, 21);
        const auto b = experiment::run_seed(cfg, 21);
        same = same && a.result.valid && a.result.matrix == b.result.matrix &&
               a.result.records.size() == b.result.records.size();
        for (std::size_t k = 0; same && k < a.result.records.size(); ++k) {
            const auto& ra = a.result.records[k];
            const auto& rb = b.result.records[k];
            same = ra.checkpoint_hash == rb.checkpoint_hash && ra.exemplar_manifest == rb.exemplar_manifest &&
                   ra.network == rb.network;
        }
        ++runs;
    }
    return {same, fmt("%zu strategies replayed with one seed: matrices, checkpoints and manifests identical: %s", runs,
                      same ? "yes" : "no")};
}

// ---------------------------------------------------------------- 10

Verdict ewc_clamp() {
    experiment::ExperimentConfig cfg;
    cfg.scenario = scenarios::ScenarioKind::Class;
    cfg.strategy = strategies::StrategyKind::Ewc;
    cfg.strategy_config.ewc_importance = 1e8;
    const std::uint64_t seed = 5;
    const auto plan = experiment::prepare_plan(cfg, seed);
    strategies::Learner learner(strategies::StrategyKind::Ewc, experiment::seeded_strategy_config(cfg, seed),
                                plan.input_dim);
    auto input_for = [&](std::size_t k) {
        strategies::TaskInput input{k, {}, plan.tasks[k].new_classes};
        for (const auto id : plan.tasks[k].train) input.train.push_back(&plan.store.at(id));
        return input;
    };
    learner.train_task(input_for(0), plan.store);
    const Network anchor = learner.network();
    const auto fisher = *learner.fisher();
    const auto at_anchor = strategies::ewc_penalty(anchor, fisher, 1e8);
    bool zero_at_anchor = at_anchor.value == 0.0;
    for (const auto& g : at_anchor.grads) zero_at_anchor = zero_at_anchor && g.weight.isZero(0.0) && g.bias.isZero(0.0);

    learner.train_task(input_for(1), plan.store);
    const Network& after = learner.network();
    // Informational split: parameters whose Fisher weight makes the penalty
    // dominate a step (lr * importance * F >= 1) versus the rest.
    const double stiff = 1.0 / (cfg.strategy_config.ewc_learning_rate * 1e8);
    double drift = 0.0, drift_stiff = 0.0, drift_soft_f = 0.0;
    std::size_t shared = 0, over = 0;
    auto visit = [&](double moved, double f) {
        ++shared;
        over += moved >= 1e-3 ? 1 : 0;
        if (moved > drift) {
            drift = moved;
            drift_soft_f = f;
        }
        if (f >= stiff) drift_stiff = std::max(drift_stiff, moved);
    };
    for (std::size_t i = 0; i < anchor.layers.size(); ++i) {
        const auto& w0 = anchor.layers[i].weight;
        const auto& f = fisher.importance[i];
        for (Eigen::Index c = 0; c < w0.cols(); ++c)
            for (Eigen::Index r = 0; r < w0.rows(); ++r)
                visit(std::abs(after.layers[i].weight(r, c) - w0(r, c)), f.weight(r, c));
        for (Eigen::Index r = 0; r < w0.rows(); ++r)
            visit(std::abs(after.layers[i].bias(r) - anchor.layers[i].bias(r)), f.bias(r));
    }
    return {zero_at_anchor && drift < 1e-3,
            fmt("importance 1e8, class stream task 2: max |theta - anchor| over shared parameters %.3e (< 1e-3) "
                "at Fisher %.2e; %zu/%zu parameters moved >= 1e-3; max drift where lr*importance*F >= 1: %.3e; "
                "penalty and gradient zero at anchor: %s",
                drift, drift_soft_f, over, shared, drift_stiff, zero_at_anchor ? "yes" : "no")};
}

}  // namespace

int main() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
        {"gradient oracle", gradient_oracle},
        {"herding oracle", herding_oracle},
        {"uncertainty invariants", uncertainty_invariants},
        {"budget safety", budget_safety},
        {"metric oracles", metric_oracles},
        {"degenerate equivalence", degenerate_equivalence},
        {"directional ordering", directional_ordering},
        {"budget-sweep plateau", budget_plateau},
        {"determinism", determinism},
        {"EWC clamp", ewc_clamp},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("threw: ") + e.what()};
        }
        failures += v.pass ? 0 : 1;
        std::printf("[%s] %2zu %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, v.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%zu/%zu criteria passed in %.0fs\n", criteria.size() - static_cast<std::size_t>(failures),
                criteria.size(), seconds_since(t0));
    return failures == 0 ? 0 : 1;
}
