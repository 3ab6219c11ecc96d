#ifndef DRIFTBENCH_METRICS_HPP
#define DRIFTBENCH_METRICS_HPP

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace driftbench::metrics {

/// a[k][j]: accuracy on task j's test split after training task k. Tasks are
/// numbered from 1 and only entries with j <= k are defined.
class AccuracyMatrix {
public:
    explicit AccuracyMatrix(std::size_t tasks = 0);

    std::size_t tasks() const { return tasks_; }
    void set(std::size_t after_task, std::size_t eval_task, double accuracy);
    double at(std::size_t after_task, std::size_t eval_task) const;
    bool has(std::size_t after_task, std::size_t eval_task) const;
    bool row_complete(std::size_t after_task) const;
    /// Number of leading rows that are complete.
    std::size_t completed_rows() const;

    bool operator==(const AccuracyMatrix& other) const = default;

private:
    std::size_t offset(std::size_t after_task, std::size_t eval_task) const;

    std::size_t tasks_ = 0;
    std::vector<std::optional<double>> cells_;
};

double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels);

/// (1/k) * sum_{j<=k} a[k][j]
double average_accuracy(const AccuracyMatrix& a, std::size_t after_task);

/// (1/(k-1)) * sum_{j<k} (max_{j<=l<k} a[l][j] - a[k][j]); negative values
/// (backward transfer) are returned unclamped.
double average_forgetting(const AccuracyMatrix& a, std::size_t after_task);

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;  // sample standard deviation, 0 for a single value
};

MeanSd mean_sd(std::span<const double> values);

}  // namespace driftbench::metrics

#endif  // DRIFTBENCH_METRICS_HPP
