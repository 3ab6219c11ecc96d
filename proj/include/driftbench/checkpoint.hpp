#ifndef DRIFTBENCH_CHECKPOINT_HPP
#define DRIFTBENCH_CHECKPOINT_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "driftbench/nn.hpp"

namespace driftbench::nn {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    Network network;
    std::vector<std::string> class_names;  // index == output row
};

nlohmann::json checkpoint_to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(const nlohmann::json& doc);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// FNV-1a over the raw parameter bytes plus the dropout configuration.
std::uint64_t parameter_hash(const Network& net);

std::string hex_digest(std::uint64_t value);

}  // namespace driftbench::nn

#endif  // DRIFTBENCH_CHECKPOINT_HPP
