#ifndef DRIFTBENCH_EXEMPLAR_HPP
#define DRIFTBENCH_EXEMPLAR_HPP

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include <json.hpp>

#include "driftbench/data.hpp"
#include "driftbench/nn.hpp"

namespace driftbench::memory {

using data::SampleId;

struct ClassQuota {
    std::size_t per_class = 0;    // m = floor(K / |C_t|)
    std::size_t herding = 0;      // ceil(m / 2)
    std::size_t uncertainty = 0;  // floor(m / 2)

    bool operator==(const ClassQuota&) const = default;
};

enum class SelectionRule {
    HerdingAndUncertainty,  // half class-mean herding, half MC-dropout uncertainty
    HerdingOnly,            // the whole quota by herding
};

ClassQuota class_quota(std::size_t budget, std::size_t n_classes,
                       SelectionRule rule = SelectionRule::HerdingAndUncertainty);

struct ScoredId {
    SampleId id = 0;
    double score = 0.0;

    bool operator==(const ScoredId&) const = default;
};

struct ClassExemplars {
    std::size_t class_id = 0;
    std::vector<SampleId> herded;     // selection order == importance order
    std::vector<ScoredId> uncertain;  // score descending, id ascending on ties

    std::size_t size() const { return herded.size() + uncertain.size(); }
    std::vector<SampleId> ids() const;
    bool operator==(const ClassExemplars&) const = default;
};

struct ExemplarSet {
    std::size_t budget = 0;
    SelectionRule rule = SelectionRule::HerdingAndUncertainty;
    std::size_t n_classes = 0;  // |C_t| the quotas were computed for
    std::map<std::size_t, ClassExemplars> classes;

    ClassQuota quota() const;
    std::size_t total_size() const;
    bool operator==(const ExemplarSet&) const = default;
};

/// Greedy herding over `features` (one column per sample). At step k the
/// sample whose inclusion brings the running mean of the k picks closest to
/// the class mean is chosen; ties go to the lowest sample id.
std::vector<SampleId> herding_order(const nn::Matrix& features, std::span<const SampleId> ids,
                                    std::size_t count);

/// Sum over classes of the population standard deviation of the T rows of
/// `runs` (T x |C| matrix of class probabilities).
double uncertainty_from_runs(const nn::Matrix& runs);

/// T stochastic train-mode passes per sample. The dropout masks for sample i,
/// pass k come from derive_seed(seed, id_i, k), so scores do not depend on
/// sample order or batching.
std::vector<double> mc_dropout_uncertainty(const nn::Network& net, const nn::Matrix& inputs,
                                           std::span<const SampleId> ids, std::size_t passes,
                                           std::uint64_t seed);

ClassExemplars build_class_exemplars(const nn::Network& net, std::size_t class_id,
                                     const nn::Matrix& inputs, std::span<const SampleId> ids,
                                     std::size_t herding_quota, std::size_t uncertainty_quota,
                                     std::size_t passes, std::uint64_t seed);

/// Recomputes quotas for `new_n_classes` and drops entries from the tail of
/// every list.
ExemplarSet reduce_exemplar_set(ExemplarSet exemplars, std::size_t new_n_classes);

/// Resolves every stored id in `store`, class by class. Throws
/// std::runtime_error on a dangling id or when a stored sample's label
/// disagrees with the class it is filed under.
std::vector<const data::Sample*> assemble_rehearsal_pool(const ExemplarSet& exemplars,
                                                   const data::SampleStore& store);

nlohmann::json exemplar_manifest(const ExemplarSet& exemplars, std::uint64_t checkpoint_hash);

}  // namespace driftbench::memory

#endif  // DRIFTBENCH_EXEMPLAR_HPP
