#include "driftbench/exemplar.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>

#include "driftbench/checkpoint.hpp"

namespace driftbench::memory {

using nlohmann::json;

ClassQuota class_quota(std::size_t budget, std::size_t n_classes, SelectionRule rule) {
    if (n_classes == 0) {
        throw std::invalid_argument("class_quota: need at least one class");
    }
    ClassQuota q;
    q.per_class = budget / n_classes;
    if (rule == SelectionRule::HerdingOnly) {
        q.herding = q.per_class;
        q.uncertainty = 0;
    } else {
        q.herding = (q.per_class + 1) / 2;
        q.uncertainty = q.per_class / 2;
    }
    return q;
}

std::vector<SampleId> ClassExemplars::ids() const {
    std::vector<SampleId> out(herded);
    for (const auto& entry : uncertain) {
        out.push_back(entry.id);
    }
    return out;
}

ClassQuota ExemplarSet::quota() const {
    if (n_classes == 0) {
        return {};
    }
    return class_quota(budget, n_classes, rule);
}

std::size_t ExemplarSet::total_size() const {
    std::size_t n = 0;
    for (const auto& [id, entry] : classes) {
        n += entry.size();
    }
    return n;
}

namespace {
constexpr double kHerdingTieTolerance = 1e-12;
}  // namespace

std::vector<SampleId> herding_order(const nn::Matrix& features, std::span<const SampleId> ids,
                                    std::size_t count) {
    if (static_cast<std::size_t>(features.cols()) != ids.size()) {
        throw std::invalid_argument("herding_order: feature columns and ids differ in length");
    }
    const std::size_t n = ids.size();
    count = std::min(count, n);
    if (count == 0) {
        return {};
    }
    // Visit candidates in id order so a strict comparison keeps the lowest id on ties.
    std::vector<std::size_t> by_id(n);
    std::iota(by_id.begin(), by_id.end(), 0);
    std::sort(by_id.begin(), by_id.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });

    // Distances are scaled by n * k: ||k * total - n * (running + x)||^2 ranks
    // candidates like the mean-based distance but stays exact on integer data,
    // so genuine ties really do fall to the lowest id.
    const nn::Vector total = features.rowwise().sum();
    const double n_d = static_cast<double>(n);
    nn::Vector running = nn::Vector::Zero(features.rows());
    std::vector<bool> taken(n, false);
    std::vector<SampleId> order;
    order.reserve(count);
    for (std::size_t k = 1; k <= count; ++k) {
        const nn::Vector target = static_cast<double>(k) * total;
        std::size_t best = n;
        double best_dist = std::numeric_limits<double>::infinity();
        for (const std::size_t i : by_id) {
            if (taken[i]) {
                continue;
            }
            const double dist =
                (target - n_d * (features.col(static_cast<Eigen::Index>(i)) + running)).squaredNorm();
            // relative slack: symmetric configurations tie mathematically but not in rounding
            if (best == n ? dist <= best_dist : dist < best_dist - kHerdingTieTolerance * best_dist) {
                best_dist = dist;
                best = i;
            }
        }
        if (best == n) {
            // every remaining distance is NaN; fall back to the lowest free id
            for (const std::size_t i : by_id) {
                if (!taken[i]) {
                    best = i;
                    break;
                }
            }
        }
        taken[best] = true;
        running += features.col(static_cast<Eigen::Index>(best));
        order.push_back(ids[best]);
    }
    return order;
}

double uncertainty_from_runs(const nn::Matrix& runs) {
    if (runs.rows() == 0) {
        throw std::invalid_argument("uncertainty_from_runs: need at least one pass");
    }
    const auto passes = static_cast<double>(runs.rows());
    double total = 0.0;
    std::vector<double> column(static_cast<std::size_t>(runs.rows()));
    for (Eigen::Index j = 0; j < runs.cols(); ++j) {
        for (Eigen::Index k = 0; k < runs.rows(); ++k) {
            column[static_cast<std::size_t>(k)] = runs(k, j);
        }
        // fixed summation order makes the score exactly invariant to pass order
        std::sort(column.begin(), column.end());
        if (column.front() == column.back()) {
            continue;  // constant column: exactly zero, free of rounding in the mean
        }
        double mean = 0.0;
        for (const double v : column) mean += v;
        mean /= passes;
        double ss = 0.0;
        for (const double v : column) ss += (v - mean) * (v - mean);
        total += std::sqrt(ss / passes);
    }
    return total;
}

std::vector<double> mc_dropout_uncertainty(const nn::Network& net, const nn::Matrix& inputs,
                                           std::span<const SampleId> ids, std::size_t passes,
                                           std::uint64_t seed) {
    if (passes < 1) {
        throw std::invalid_argument("mc_dropout_uncertainty: need at least one pass");
    }
    if (static_cast<std::size_t>(inputs.cols()) != ids.size()) {
        throw std::invalid_argument("mc_dropout_uncertainty: input columns and ids differ in length");
    }
    const std::size_t n = ids.size();
    const auto classes = static_cast<Eigen::Index>(net.output_dim());
    std::vector<nn::Matrix> runs(n, nn::Matrix(static_cast<Eigen::Index>(passes), classes));
    for (std::size_t k = 0; k < passes; ++k) {
        nn::Matrix mask;
        if (net.dropout_after) {
            const auto width = net.layers[*net.dropout_after].weight.rows();
            mask.resize(width, static_cast<Eigen::Index>(n));
            for (std::size_t i = 0; i < n; ++i) {
                Rng rng(derive_seed(seed, ids[i], k));
                mask.col(static_cast<Eigen::Index>(i)) = nn::sample_dropout_mask(net, 1, rng).col(0);
            }
        }
        const nn::ForwardTrace trace = nn::forward_with_mask(net, inputs, mask);
        for (std::size_t i = 0; i < n; ++i) {
            runs[i].row(static_cast<Eigen::Index>(k)) =
                nn::softmax(trace.logits().col(static_cast<Eigen::Index>(i))).transpose();
        }
    }
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) {
        scores[i] = uncertainty_from_runs(runs[i]);
    }
    return scores;
}

ClassExemplars build_class_exemplars(const nn::Network& net, std::size_t class_id,
                                     const nn::Matrix& inputs, std::span<const SampleId> ids,
                                     std::size_t herding_quota, std::size_t uncertainty_quota,
                                     std::size_t passes, std::uint64_t seed) {
    ClassExemplars out;
    out.class_id = class_id;
    if (ids.empty() || herding_quota + uncertainty_quota == 0) {
        return out;
    }
    const nn::Matrix psi = nn::features(net, inputs);
    out.herded = herding_order(psi, ids, herding_quota);
    if (uncertainty_quota == 0) {
        return out;
    }

    const std::unordered_set<SampleId> herded(out.herded.begin(), out.herded.end());
    std::vector<SampleId> rest_ids;
    std::vector<Eigen::Index> rest_cols;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (!herded.contains(ids[i])) {
            rest_ids.push_back(ids[i]);
            rest_cols.push_back(static_cast<Eigen::Index>(i));
        }
    }
    if (rest_ids.empty()) {
        return out;
    }
    nn::Matrix rest(inputs.rows(), static_cast<Eigen::Index>(rest_cols.size()));
    for (std::size_t i = 0; i < rest_cols.size(); ++i) {
        rest.col(static_cast<Eigen::Index>(i)) = inputs.col(rest_cols[i]);
    }
    const std::vector<double> scores = mc_dropout_uncertainty(net, rest, rest_ids, passes, seed);
    std::vector<ScoredId> ranked;
    ranked.reserve(rest_ids.size());
    for (std::size_t i = 0; i < rest_ids.size(); ++i) {
        ranked.push_back({rest_ids[i], scores[i]});
    }
    std::sort(ranked.begin(), ranked.end(), [](const ScoredId& a, const ScoredId& b) {
        return a.score != b.score ? a.score > b.score : a.id < b.id;
    });
    ranked.resize(std::min(ranked.size(), uncertainty_quota));
    out.uncertain = std::move(ranked);
    return out;
}

ExemplarSet reduce_exemplar_set(ExemplarSet exemplars, std::size_t new_n_classes) {
    if (new_n_classes < exemplars.n_classes) {
        throw std::invalid_argument("reduce_exemplar_set: class count cannot shrink");
    }
    exemplars.n_classes = new_n_classes;
    const ClassQuota q = exemplars.quota();
    for (auto& [id, entry] : exemplars.classes) {
        if (entry.herded.size() > q.herding) entry.herded.resize(q.herding);
        if (entry.uncertain.size() > q.uncertainty) entry.uncertain.resize(q.uncertainty);
    }
    return exemplars;
}

std::vector<const data::Sample*> assemble_rehearsal_pool(const ExemplarSet& exemplars,
                                                         const data::SampleStore& store) {
    std::vector<const data::Sample*> pool;
    pool.reserve(exemplars.total_size());
    for (const auto& [class_id, entry] : exemplars.classes) {
        for (const SampleId id : entry.ids()) {
            if (!store.contains(id)) {
                throw std::runtime_error("exemplar set references unknown sample id " + std::to_string(id));
            }
            const data::Sample& s = store.at(id);
            if (s.label != class_id) {
                throw std::runtime_error("exemplar " + std::to_string(id) + " filed under class " +
                                         std::to_string(class_id) + " has label " +
                                         std::to_string(s.label));
            }
            pool.push_back(&s);
        }
    }
    return pool;
}

json exemplar_manifest(const ExemplarSet& exemplars, std::uint64_t checkpoint_hash) {
    const ClassQuota q = exemplars.quota();
    json classes = json::array();
    for (const auto& [class_id, entry] : exemplars.classes) {
        json uncertain = json::array();
        for (const auto& u : entry.uncertain) {
            uncertain.push_back({u.id, u.score});
        }
        classes.push_back({{"class_id", class_id}, {"herded", entry.herded}, {"uncertain", std::move(uncertain)}});
    }
    return {{"budget", exemplars.budget},
            {"n_classes", exemplars.n_classes},
            {"per_class", q.per_class},
            {"herding_quota", q.herding},
            {"uncertainty_quota", q.uncertainty},
            {"rule", exemplars.rule == SelectionRule::HerdingOnly ? "herding" : "herding+uncertainty"},
            {"stored", exemplars.total_size()},
            {"checkpoint_hash", nn::hex_digest(checkpoint_hash)},
            {"classes", std::move(classes)}};
}

}  // namespace driftbench::memory
