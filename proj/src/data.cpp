#include "driftbench/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string_view>
#include <unordered_set>

namespace driftbench::data {

using nlohmann::json;

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <typename T>
std::optional<T> parse_number(std::string_view text) {
    text = trim(text);
    T value{};
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end || text.empty()) {
        return std::nullopt;
    }
    return value;
}

void append_double(std::string& out, double value) {
    char buffer[32];
    const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
    out.append(buffer, ptr);
}

}  // namespace

std::size_t Dataset::feature_dim() const {
    return samples.empty() ? 0 : static_cast<std::size_t>(samples.front().features.size());
}

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(class_names.size(), 0);
    for (const auto& s : samples) {
        if (s.label < counts.size()) {
            ++counts[s.label];
        }
    }
    return counts;
}

void Dataset::validate() const {
    std::unordered_set<SampleId> ids;
    const std::size_t dim = feature_dim();
    for (const auto& s : samples) {
        if (!ids.insert(s.id).second) {
            throw std::invalid_argument("dataset " + name + ": duplicate sample id " + std::to_string(s.id));
        }
        if (static_cast<std::size_t>(s.features.size()) != dim) {
            throw std::invalid_argument("dataset " + name + ": ragged feature length at id " +
                                        std::to_string(s.id));
        }
        if (s.label >= class_names.size()) {
            throw std::invalid_argument("dataset " + name + ": label out of range at id " +
                                        std::to_string(s.id));
        }
    }
    const auto counts = class_counts();
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] < 2) {
            throw std::invalid_argument("dataset " + name + ": class " + class_names[c] +
                                        " has fewer than 2 samples");
        }
    }
}

Dataset generate_synthetic_domain(const std::vector<nn::Vector>& prototypes,
                                  const std::vector<std::string>& class_names, const DomainSpec& spec,
                                  Rng& rng) {
    if (prototypes.empty()) {
        throw std::invalid_argument("generate_synthetic_domain: no prototypes");
    }
    if (class_names.size() != prototypes.size() || spec.class_counts.size() != prototypes.size()) {
        throw std::invalid_argument("generate_synthetic_domain: class count mismatch");
    }
    const auto dim = prototypes.front().size();
    for (const auto& p : prototypes) {
        if (p.size() != dim) {
            throw std::invalid_argument("generate_synthetic_domain: prototypes differ in dimension");
        }
    }
    if (spec.transform.rows() != dim || spec.transform.cols() != dim || spec.offset.size() != dim) {
        throw std::invalid_argument("generate_synthetic_domain: transform shape mismatch");
    }
    if (!Eigen::FullPivLU<nn::Matrix>(spec.transform).isInvertible()) {
        throw std::invalid_argument("generate_synthetic_domain: degenerate transform");
    }
    if (!(spec.noise > 0.0)) {
        throw std::invalid_argument("generate_synthetic_domain: noise scale must be positive");
    }

    Dataset out;
    out.domain = spec.domain;
    out.name = "synthetic_domain_" + std::to_string(spec.domain);
    out.class_names = class_names;
    std::normal_distribution<double> normal(0.0, spec.noise);
    SampleId next = static_cast<SampleId>(spec.domain) * kDomainIdStride;
    for (std::size_t c = 0; c < prototypes.size(); ++c) {
        const nn::Vector center = spec.transform * prototypes[c] + spec.offset;
        for (std::size_t i = 0; i < spec.class_counts[c]; ++i) {
            Sample s;
            s.id = next++;
            s.label = c;
            s.domain = spec.domain;
            s.features = center;
            for (Eigen::Index k = 0; k < dim; ++k) {
                s.features(k) += normal(rng);
            }
            out.samples.push_back(std::move(s));
        }
    }
    return out;
}

Split stratified_split(const Dataset& dataset, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw std::invalid_argument("stratified_split: train fraction must lie in (0, 1)");
    }
    std::map<std::size_t, std::vector<SampleId>> by_class;
    for (const auto& s : dataset.samples) {
        by_class[s.label].push_back(s.id);
    }
    Split split;
    for (auto& [label, ids] : by_class) {
        if (ids.size() < 2) {
            throw std::invalid_argument("stratified_split: class " + std::to_string(label) +
                                        " has a single sample");
        }
        std::sort(ids.begin(), ids.end());
        Rng rng(derive_seed(seed, "split", label));
        std::shuffle(ids.begin(), ids.end(), rng);
        auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(ids.size()) * train_fraction));
        n_train = std::clamp<std::size_t>(n_train, 1, ids.size() - 1);
        split.train.insert(split.train.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
        split.test.insert(split.test.end(), ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

Dataset load_csv_dataset(const std::filesystem::path& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) {
        throw CsvError("cannot open " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw CsvError(path.string() + ": empty file");
    }
    const auto header = split_fields(trim(line));
    if (header.size() < 4 || trim(header[0]) != "id" || trim(header[1]) != "label" ||
        trim(header[2]) != "domain") {
        throw CsvError(path.string() + " line 1: header must be id,label,domain,f0,...");
    }
    const std::size_t dim = header.size() - 3;
    for (std::size_t k = 0; k < dim; ++k) {
        if (trim(header[k + 3]) != "f" + std::to_string(k)) {
            throw CsvError(path.string() + " line 1: expected column f" + std::to_string(k));
        }
    }
    if (schema.feature_dim && *schema.feature_dim != dim) {
        throw CsvError(path.string() + " line 1: expected " + std::to_string(*schema.feature_dim) +
                       " features, header has " + std::to_string(dim));
    }

    Dataset out;
    out.name = schema.name.empty() ? path.stem().string() : schema.name;
    out.provenance = path.string();
    std::vector<std::string> problems;
    std::unordered_map<SampleId, std::size_t> seen;
    std::set<std::size_t> domains;
    std::size_t max_label = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto text = trim(line);
        if (text.empty()) {
            continue;
        }
        const auto fields = split_fields(text);
        const std::string where = "line " + std::to_string(line_no);
        if (fields.size() != header.size()) {
            problems.push_back(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                               std::to_string(fields.size()));
            continue;
        }
        const auto id = parse_number<SampleId>(fields[0]);
        const auto label = parse_number<std::size_t>(fields[1]);
        const auto domain = parse_number<std::size_t>(fields[2]);
        if (!id || !label || !domain) {
            problems.push_back(where + ": id, label and domain must be non-negative integers");
            continue;
        }
        Sample s;
        s.id = *id;
        s.label = *label;
        s.domain = *domain;
        s.features.resize(static_cast<Eigen::Index>(dim));
        bool numeric = true;
        for (std::size_t k = 0; k < dim; ++k) {
            const auto v = parse_number<double>(fields[k + 3]);
            if (!v) {
                problems.push_back(where + ": non-numeric feature f" + std::to_string(k));
                numeric = false;
                break;
            }
            s.features(static_cast<Eigen::Index>(k)) = *v;
        }
        if (!numeric) {
            continue;
        }
        if (const auto it = seen.find(s.id); it != seen.end()) {
            problems.push_back(where + ": duplicate id " + std::to_string(s.id) + " (first seen on line " +
                               std::to_string(it->second) + ")");
            continue;
        }
        seen.emplace(s.id, line_no);
        domains.insert(s.domain);
        max_label = std::max(max_label, s.label);
        out.samples.push_back(std::move(s));
    }
    if (domains.size() > 1) {
        problems.push_back("mixed domain ids in one file");
    }
    if (!problems.empty()) {
        std::ostringstream msg;
        msg << path.string() << ": " << problems.size() << " problem(s)";
        for (const auto& p : problems) {
            msg << "\n  " << p;
        }
        throw CsvError(msg.str());
    }
    if (out.samples.empty()) {
        throw CsvError(path.string() + ": no data rows");
    }
    out.domain = *domains.begin();
    if (!schema.class_names.empty()) {
        if (max_label >= schema.class_names.size()) {
            throw CsvError(path.string() + ": label " + std::to_string(max_label) +
                           " exceeds the supplied class names");
        }
        out.class_names = schema.class_names;
    } else {
        for (std::size_t c = 0; c <= max_label; ++c) {
            out.class_names.push_back("class_" + std::to_string(c));
        }
    }
    return out;
}

void write_csv_dataset(const std::filesystem::path& path, const Dataset& dataset) {
    std::ofstream out(path);
    if (!out) {
        throw CsvError("cannot write " + path.string());
    }
    const std::size_t dim = dataset.feature_dim();
    std::string text = "id,label,domain";
    for (std::size_t k = 0; k < dim; ++k) {
        text += ",f" + std::to_string(k);
    }
    text += '\n';
    for (const auto& s : dataset.samples) {
        text += std::to_string(s.id) + ',' + std::to_string(s.label) + ',' + std::to_string(s.domain);
        for (Eigen::Index k = 0; k < s.features.size(); ++k) {
            text += ',';
            append_double(text, s.features(k));
        }
        text += '\n';
    }
    out << text;
}

json dataset_manifest(const Dataset& dataset) {
    std::uint64_t h = fnv1a(dataset.name);
    for (const auto& s : dataset.samples) {
        h = fnv1a(std::string_view(reinterpret_cast<const char*>(&s.id), sizeof(s.id)), h);
        h = fnv1a(std::string_view(reinterpret_cast<const char*>(&s.label), sizeof(s.label)), h);
        h = fnv1a(std::string_view(reinterpret_cast<const char*>(s.features.data()),
                                   static_cast<std::size_t>(s.features.size()) * sizeof(double)),
                  h);
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
    return {{"name", dataset.name},
            {"domain", dataset.domain},
            {"class_names", dataset.class_names},
            {"class_counts", dataset.class_counts()},
            {"feature_dim", dataset.feature_dim()},
            {"provenance", dataset.provenance},
            {"content_hash", hex}};
}

void SampleStore::add(Sample sample) {
    if (index_.contains(sample.id)) {
        throw std::invalid_argument("sample store: duplicate id " + std::to_string(sample.id));
    }
    index_.emplace(sample.id, samples_.size());
    samples_.push_back(std::move(sample));
}

const Sample& SampleStore::at(SampleId id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) {
        throw std::out_of_range("sample store: unknown id " + std::to_string(id));
    }
    return samples_[it->second];
}

nn::Matrix stack_features(const std::vector<const Sample*>& samples) {
    if (samples.empty()) {
        return {};
    }
    nn::Matrix out(samples.front()->features.size(), static_cast<Eigen::Index>(samples.size()));
    for (std::size_t i = 0; i < samples.size(); ++i) {
        out.col(static_cast<Eigen::Index>(i)) = samples[i]->features;
    }
    return out;
}

json to_json(const SyntheticConfig& c) {
    return {{"domains", c.domains},
            {"classes", c.classes},
            {"feature_dim", c.feature_dim},
            {"samples_per_class", c.samples_per_class},
            {"prototype_scale", c.prototype_scale},
            {"noise", c.noise},
            {"shift", c.shift},
            {"offset_scale", c.offset_scale},
            {"imbalance", c.imbalance}};
}

SyntheticConfig synthetic_config_from_json(const json& doc) {
    SyntheticConfig c;
    c.domains = doc.value("domains", c.domains);
    c.classes = doc.value("classes", c.classes);
    c.feature_dim = doc.value("feature_dim", c.feature_dim);
    c.samples_per_class = doc.value("samples_per_class", c.samples_per_class);
    c.prototype_scale = doc.value("prototype_scale", c.prototype_scale);
    c.noise = doc.value("noise", c.noise);
    c.shift = doc.value("shift", c.shift);
    c.offset_scale = doc.value("offset_scale", c.offset_scale);
    c.imbalance = doc.value("imbalance", c.imbalance);
    return c;
}

std::vector<Dataset> make_synthetic_datasets(const SyntheticConfig& config, std::uint64_t seed) {
    if (config.domains == 0 || config.classes == 0 || config.feature_dim == 0) {
        throw std::invalid_argument("synthetic config: domains, classes and feature_dim must be positive");
    }
    if (config.imbalance < 0.0 || config.imbalance >= 1.0) {
        throw std::invalid_argument("synthetic config: imbalance must lie in [0, 1)");
    }
    const auto dim = static_cast<Eigen::Index>(config.feature_dim);
    Rng proto_rng(derive_seed(seed, "prototypes"));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<nn::Vector> prototypes(config.classes, nn::Vector(dim));
    for (auto& p : prototypes) {
        for (Eigen::Index k = 0; k < dim; ++k) {
            p(k) = config.prototype_scale * normal(proto_rng);
        }
    }
    std::vector<std::string> names;
    for (std::size_t c = 0; c < config.classes; ++c) {
        names.push_back("class_" + std::to_string(c));
    }
    std::vector<std::size_t> counts(config.classes);
    for (std::size_t c = 0; c < config.classes; ++c) {
        const double t = config.classes > 1 ? static_cast<double>(c) / static_cast<double>(config.classes - 1) : 0.0;
        counts[c] = std::max<std::size_t>(
            2, static_cast<std::size_t>(std::lround(static_cast<double>(config.samples_per_class) *
                                                    (1.0 - config.imbalance * t))));
    }

    std::vector<Dataset> out;
    for (std::size_t d = 0; d < config.domains; ++d) {
        Rng rng(derive_seed(seed, "domain", d));
        DomainSpec spec;
        spec.domain = d;
        spec.noise = config.noise;
        spec.class_counts = counts;
        nn::Matrix distortion(dim, dim);
        for (Eigen::Index r = 0; r < dim; ++r) {
            for (Eigen::Index c = 0; c < dim; ++c) {
                distortion(r, c) = normal(rng);
            }
        }
        spec.transform = nn::Matrix::Identity(dim, dim) +
                         (config.shift / std::sqrt(static_cast<double>(dim))) * distortion;
        spec.offset = nn::Vector(dim);
        for (Eigen::Index k = 0; k < dim; ++k) {
            spec.offset(k) = config.offset_scale * normal(rng);
        }
        Dataset ds = generate_synthetic_domain(prototypes, names, spec, rng);
        ds.provenance = "synthetic:" + to_json(config).dump() + ":seed=" + std::to_string(seed);
        out.push_back(std::move(ds));
    }
    return out;
}

}  // namespace driftbench::data
