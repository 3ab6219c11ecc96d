#ifndef DRIFTBENCH_DATA_HPP
#define DRIFTBENCH_DATA_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "driftbench/nn.hpp"
#include "driftbench/rng.hpp"

namespace driftbench::data {

using SampleId = std::uint64_t;

struct Sample {
    SampleId id = 0;
    nn::Vector features;
    std::size_t label = 0;  // native class index within its dataset
    std::size_t domain = 0;

    bool operator==(const Sample& other) const {
        return id == other.id && label == other.label && domain == other.domain &&
               features.size() == other.features.size() && features == other.features;
    }
};

struct Dataset {
    std::string name;
    std::size_t domain = 0;
    std::vector<std::string> class_names;
    std::vector<Sample> samples;
    std::string provenance;

    std::size_t feature_dim() const;
    std::vector<std::size_t> class_counts() const;

    /// Unique ids, uniform feature length, labels within class_names, and at
    /// least two samples per class. Throws std::invalid_argument otherwise.
    void validate() const;
};

/// Per-domain shift applied to the shared class prototypes.
struct DomainSpec {
    std::size_t domain = 0;
    nn::Matrix transform;  // must be invertible
    nn::Vector offset;
    double noise = 1.0;
    std::vector<std::size_t> class_counts;
};

/// Draws class_counts[c] samples of transform * prototype_c + offset + N(0, noise^2 I).
/// Sample ids are domain * kDomainIdStride + running index.
Dataset generate_synthetic_domain(const std::vector<nn::Vector>& prototypes,
                                  const std::vector<std::string>& class_names, const DomainSpec& spec,
                                  Rng& rng);

inline constexpr SampleId kDomainIdStride = 1'000'000;

struct Split {
    std::vector<SampleId> train;
    std::vector<SampleId> test;
};

/// Per class: floor(n * fraction) samples to train, at least one on each side.
Split stratified_split(const Dataset& dataset, double train_fraction, std::uint64_t seed);

struct CsvError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CsvSchema {
    std::optional<std::size_t> feature_dim;  // inferred from the header when absent
    std::vector<std::string> class_names;    // "class_<k>" when empty
    std::string name;
};

/// Header: id,label,domain,f0,...,f{d-1}. Labels are native class indices.
Dataset load_csv_dataset(const std::filesystem::path& path, const CsvSchema& schema = {});
void write_csv_dataset(const std::filesystem::path& path, const Dataset& dataset);

nlohmann::json dataset_manifest(const Dataset& dataset);

/// Id-indexed sample lookup shared by scenario plans and exemplar memories.
class SampleStore {
public:
    void add(Sample sample);
    const Sample& at(SampleId id) const;
    bool contains(SampleId id) const { return index_.contains(id); }
    std::size_t size() const { return samples_.size(); }
    const std::vector<Sample>& samples() const { return samples_; }

private:
    std::vector<Sample> samples_;
    std::unordered_map<SampleId, std::size_t> index_;
};

/// Column-stacked feature matrix of the given samples.
nn::Matrix stack_features(const std::vector<const Sample*>& samples);

/// Knobs for the built-in multi-domain benchmark.
struct SyntheticConfig {
    std::size_t domains = 3;
    std::size_t classes = 5;
    std::size_t feature_dim = 16;
    std::size_t samples_per_class = 200;
    double prototype_scale = 1.0;
    double noise = 1.0;
    double shift = 0.6;        // strength of the per-domain linear distortion
    double offset_scale = 0.5; // strength of the per-domain translation
    // Fraction by which the last class is smaller than the first; class sizes
    // fall off linearly in between. 0 gives balanced classes.
    double imbalance = 0.0;
};

nlohmann::json to_json(const SyntheticConfig& config);
SyntheticConfig synthetic_config_from_json(const nlohmann::json& doc);

/// One dataset per domain sharing class names "class_0".."class_{n-1}".
std::vector<Dataset> make_synthetic_datasets(const SyntheticConfig& config, std::uint64_t seed);

}  // namespace driftbench::data

#endif  // DRIFTBENCH_DATA_HPP
