#include "driftbench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace driftbench::metrics {

AccuracyMatrix::AccuracyMatrix(std::size_t tasks) : tasks_(tasks), cells_(tasks * tasks) {}

std::size_t AccuracyMatrix::offset(std::size_t after_task, std::size_t eval_task) const {
    if (after_task < 1 || after_task > tasks_ || eval_task < 1 || eval_task > after_task) {
        throw std::out_of_range("accuracy matrix: cell (" + std::to_string(after_task) + ", " +
                                std::to_string(eval_task) + ") outside the lower triangle");
    }
    return (after_task - 1) * tasks_ + (eval_task - 1);
}

void AccuracyMatrix::set(std::size_t after_task, std::size_t eval_task, double value) {
    if (!(value >= 0.0 && value <= 1.0)) {
        throw std::invalid_argument("accuracy matrix: entry outside [0, 1]");
    }
    cells_[offset(after_task, eval_task)] = value;
}

double AccuracyMatrix::at(std::size_t after_task, std::size_t eval_task) const {
    const auto& cell = cells_[offset(after_task, eval_task)];
    if (!cell) {
        throw std::out_of_range("accuracy matrix: cell (" + std::to_string(after_task) + ", " +
                                std::to_string(eval_task) + ") not recorded");
    }
    return *cell;
}

bool AccuracyMatrix::has(std::size_t after_task, std::size_t eval_task) const {
    return cells_[offset(after_task, eval_task)].has_value();
}

bool AccuracyMatrix::row_complete(std::size_t after_task) const {
    for (std::size_t j = 1; j <= after_task; ++j) {
        if (!has(after_task, j)) {
            return false;
        }
    }
    return true;
}

std::size_t AccuracyMatrix::completed_rows() const {
    std::size_t k = 0;
    while (k < tasks_ && row_complete(k + 1)) {
        ++k;
    }
    return k;
}

double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels) {
    if (predictions.empty() || predictions.size() != labels.size()) {
        throw std::invalid_argument("accuracy: need equal, non-empty prediction and label lists");
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        correct += predictions[i] == labels[i] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double average_accuracy(const AccuracyMatrix& a, std::size_t after_task) {
    if (after_task < 1 || after_task > a.tasks()) {
        throw std::out_of_range("average_accuracy: task index out of range");
    }
    double sum = 0.0;
    for (std::size_t j = 1; j <= after_task; ++j) {
        sum += a.at(after_task, j);
    }
    return sum / static_cast<double>(after_task);
}

double average_forgetting(const AccuracyMatrix& a, std::size_t after_task) {
    if (after_task < 2 || after_task > a.tasks()) {
        throw std::out_of_range("average_forgetting: needs 2 <= k <= task count");
    }
    double sum = 0.0;
    for (std::size_t j = 1; j < after_task; ++j) {
        double best = a.at(j, j);
        for (std::size_t l = j + 1; l < after_task; ++l) {
            best = std::max(best, a.at(l, j));
        }
        sum += best - a.at(after_task, j);
    }
    return sum / static_cast<double>(after_task - 1);
}

MeanSd mean_sd(std::span<const double> values) {
    if (values.empty()) {
        throw std::invalid_argument("mean_sd: no values");
    }
    MeanSd out;
    for (const double v : values) out.mean += v;
    out.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (const double v : values) ss += (v - out.mean) * (v - out.mean);
        out.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return out;
}

}  // namespace driftbench::metrics
