// Shared helpers for the unit and acceptance suites: random fixtures and the
// finite-difference / brute-force oracles. Nothing here calls into the
// gradient or selection code it is used to check.
#ifndef DRIFTBENCH_TESTS_SUPPORT_HPP
#define DRIFTBENCH_TESTS_SUPPORT_HPP

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "driftbench/nn.hpp"
#include "driftbench/rng.hpp"

namespace testsupport {

using driftbench::Rng;
using driftbench::nn::GradientSet;
using driftbench::nn::Matrix;
using driftbench::nn::Network;
using driftbench::nn::Vector;

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double sd = 1.0) {
    std::normal_distribution<double> normal(0.0, sd);
    Matrix m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = normal(rng);
    return m;
}

/// Fully random network (non-zero biases) with the given widths.
inline Network random_network(Rng& rng, std::size_t input, const std::vector<std::size_t>& hidden,
                              std::size_t output, double dropout_rate = 0.0, std::size_t dropout_after = 0) {
    Network net;
    std::size_t fan_in = input;
    std::vector<std::size_t> widths(hidden);
    widths.push_back(output);
    for (const auto w : widths) {
        net.layers.push_back({random_matrix(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(fan_in), rng,
                                            1.0 / std::sqrt(static_cast<double>(fan_in))),
                              random_matrix(static_cast<Eigen::Index>(w), 1, rng, 0.1).col(0)});
        fan_in = w;
    }
    if (dropout_rate > 0.0) {
        net.dropout_rate = dropout_rate;
        net.dropout_after = dropout_after;
    }
    net.validate();
    return net;
}

/// Central differences of `loss` against every parameter; returns
/// ||analytic - numeric|| / (||analytic|| + ||numeric||).
inline double fd_relative_error(const Network& net, const std::function<double(const Network&)>& loss,
                                const GradientSet& analytic, double h = 1e-6) {
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    Network probe = net;
    auto visit = [&](double& param, double grad) {
        const double saved = param;
        param = saved + h;
        const double up = loss(probe);
        param = saved - h;
        const double down = loss(probe);
        param = saved;
        const double numeric = (up - down) / (2.0 * h);
        diff2 += (grad - numeric) * (grad - numeric);
        a2 += grad * grad;
        n2 += numeric * numeric;
    };
    for (std::size_t i = 0; i < probe.layers.size(); ++i) {
        auto& layer = probe.layers[i];
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) visit(layer.weight(r, c), analytic[i].weight(r, c));
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r) visit(layer.bias(r), analytic[i].bias(r));
    }
    const double denom = std::sqrt(a2) + std::sqrt(n2);
    return denom == 0.0 ? 0.0 : std::sqrt(diff2) / denom;
}

/// Greedy herding on integer-valued points with exact int64 arithmetic:
/// n^2 k^2 |mean - (S + x)/k|^2 = |k * total - n * (S + x)|^2.
inline std::vector<std::uint64_t> herding_oracle_exact(const std::vector<std::vector<double>>& points,
                                                       const std::vector<std::uint64_t>& ids, std::size_t count) {
    const std::size_t n = points.size();
    const std::size_t d = n == 0 ? 0 : points[0].size();
    std::vector<std::int64_t> total(d, 0), sum(d, 0);
    for (const auto& p : points)
        for (std::size_t k = 0; k < d; ++k) total[k] += static_cast<std::int64_t>(p[k]);
    std::vector<std::uint64_t> order;
    std::vector<bool> used(n, false);
    const auto nn = static_cast<std::int64_t>(n);
    for (std::size_t step = 1; step <= std::min(count, n); ++step) {
        std::size_t best = n;
        std::int64_t best_dist = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (used[i]) continue;
            std::int64_t dist = 0;
            for (std::size_t k = 0; k < d; ++k) {
                const std::int64_t e = static_cast<std::int64_t>(step) * total[k] -
                                       nn * (sum[k] + static_cast<std::int64_t>(points[i][k]));
                dist += e * e;
            }
            if (best == n || dist < best_dist || (dist == best_dist && ids[i] < ids[best])) {
                best_dist = dist;
                best = i;
            }
        }
        used[best] = true;
        for (std::size_t k = 0; k < d; ++k) sum[k] += static_cast<std::int64_t>(points[best][k]);
        order.push_back(ids[best]);
    }
    return order;
}

/// Greedy herding straight from the definition, in long double. Distances
/// within a relative 1e-12 of the minimum count as ties (lowest id wins).
inline std::vector<std::uint64_t> herding_oracle(const std::vector<std::vector<double>>& points,
                                                 const std::vector<std::uint64_t>& ids, std::size_t count) {
    using real = long double;
    const std::size_t n = points.size();
    const std::size_t d = n == 0 ? 0 : points[0].size();
    std::vector<real> mean(d, 0.0L);
    for (const auto& p : points)
        for (std::size_t k = 0; k < d; ++k) mean[k] += p[k];
    for (auto& m : mean) m /= static_cast<real>(n);
    std::vector<std::uint64_t> order;
    std::vector<bool> used(n, false);
    std::vector<real> sum(d, 0.0L);
    for (std::size_t step = 1; step <= std::min(count, n); ++step) {
        std::vector<real> dist(n, std::numeric_limits<real>::infinity());
        real lowest = std::numeric_limits<real>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            if (used[i]) continue;
            real acc = 0.0L;
            for (std::size_t k = 0; k < d; ++k) {
                const real approx = (points[i][k] + sum[k]) / static_cast<real>(step);
                acc += (mean[k] - approx) * (mean[k] - approx);
            }
            dist[i] = acc;
            lowest = std::min(lowest, acc);
        }
        std::size_t best = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (used[i] || dist[i] > lowest + 1e-12L * lowest) continue;
            if (best == n || ids[i] < ids[best]) best = i;
        }
        used[best] = true;
        for (std::size_t k = 0; k < d; ++k) sum[k] += points[best][k];
        order.push_back(ids[best]);
    }
    return order;
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < idx.size();) {
            std::size_t j = i;
            while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
            const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const auto rx = ranks(x), ry = ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace testsupport

#endif  // DRIFTBENCH_TESTS_SUPPORT_HPP
