#include "driftbench/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string_view>

namespace driftbench::nn {

using nlohmann::json;

namespace {

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            row.push_back(m(r, c));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const json& rows, Eigen::Index n_rows, Eigen::Index n_cols) {
    if (!rows.is_array() || static_cast<Eigen::Index>(rows.size()) != n_rows) {
        throw std::runtime_error("checkpoint: weight row count mismatch");
    }
    Matrix m(n_rows, n_cols);
    for (Eigen::Index r = 0; r < n_rows; ++r) {
        const json& row = rows[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n_cols) {
            throw std::runtime_error("checkpoint: weight column count mismatch");
        }
        for (Eigen::Index c = 0; c < n_cols; ++c) {
            m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
        }
    }
    return m;
}

std::uint64_t hash_doubles(const double* data, Eigen::Index n, std::uint64_t h) {
    return fnv1a(std::string_view(reinterpret_cast<const char*>(data),
                                  static_cast<std::size_t>(n) * sizeof(double)),
                 h);
}

}  // namespace

json checkpoint_to_json(const Checkpoint& checkpoint) {
    const Network& net = checkpoint.network;
    net.validate();
    json layers = json::array();
    for (const auto& layer : net.layers) {
        layers.push_back({{"rows", layer.weight.rows()},
                          {"cols", layer.weight.cols()},
                          {"weight", matrix_to_json(layer.weight)},
                          {"bias", std::vector<double>(layer.bias.data(),
                                                       layer.bias.data() + layer.bias.size())}});
    }
    json doc = {{"format", "driftbench-checkpoint"},
                {"version", kCheckpointVersion},
                {"dropout_rate", net.dropout_rate},
                {"dropout_after", nullptr},
                {"class_names", checkpoint.class_names},
                {"layers", std::move(layers)}};
    if (net.dropout_after) {
        doc["dropout_after"] = *net.dropout_after;
    }
    return doc;
}

Checkpoint checkpoint_from_json(const json& doc) {
    if (doc.value("format", "") != "driftbench-checkpoint") {
        throw std::runtime_error("checkpoint: unrecognised format tag");
    }
    if (doc.at("version").get<int>() != kCheckpointVersion) {
        throw std::runtime_error("checkpoint: unsupported version " + doc.at("version").dump());
    }
    Checkpoint out;
    out.network.dropout_rate = doc.at("dropout_rate").get<double>();
    if (!doc.at("dropout_after").is_null()) {
        out.network.dropout_after = doc.at("dropout_after").get<std::size_t>();
    }
    out.class_names = doc.at("class_names").get<std::vector<std::string>>();
    for (const auto& entry : doc.at("layers")) {
        const auto rows = entry.at("rows").get<Eigen::Index>();
        const auto cols = entry.at("cols").get<Eigen::Index>();
        DenseLayer layer;
        layer.weight = matrix_from_json(entry.at("weight"), rows, cols);
        const auto bias = entry.at("bias").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(bias.size()) != rows) {
            throw std::runtime_error("checkpoint: bias length mismatch");
        }
        layer.bias = Eigen::Map<const Vector>(bias.data(), rows);
        out.network.layers.push_back(std::move(layer));
    }
    out.network.validate();
    if (!out.class_names.empty() && out.class_names.size() != out.network.output_dim()) {
        throw std::runtime_error("checkpoint: class registry does not match output dimension");
    }
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write checkpoint " + path.string());
    }
    out << checkpoint_to_json(checkpoint).dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot read checkpoint " + path.string());
    }
    return checkpoint_from_json(json::parse(in));
}

std::uint64_t parameter_hash(const Network& net) {
    std::uint64_t h = fnv1a("driftbench-params");
    for (const auto& layer : net.layers) {
        const std::uint64_t dims[2] = {static_cast<std::uint64_t>(layer.weight.rows()),
                                       static_cast<std::uint64_t>(layer.weight.cols())};
        h = fnv1a(std::string_view(reinterpret_cast<const char*>(dims), sizeof(dims)), h);
        h = hash_doubles(layer.weight.data(), layer.weight.size(), h);
        h = hash_doubles(layer.bias.data(), layer.bias.size(), h);
    }
    h = hash_doubles(&net.dropout_rate, 1, h);
    const std::uint64_t position = net.dropout_after ? *net.dropout_after : ~std::uint64_t{0};
    return fnv1a(std::string_view(reinterpret_cast<const char*>(&position), sizeof(position)), h);
}

std::string hex_digest(std::uint64_t value) {
    char buffer[17];
    std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(value));
    return buffer;
}

}  // namespace driftbench::nn
