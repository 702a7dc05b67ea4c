#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>

#include "a3s/net/spotting_net.hpp"

namespace a3s {

/// Metadata written next to a checkpoint as <checkpoint>.json.
struct CheckpointInfo {
  NetConfig net;
  std::uint64_t iteration = 0;  // completed training iterations
};

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint);

void save_model(const std::filesystem::path& path, const SpottingNet& net, std::uint64_t iteration);
CheckpointInfo read_checkpoint_info(const std::filesystem::path& checkpoint);

/// Builds a network from the sidecar config and loads the weights.
std::unique_ptr<SpottingNet> load_model(const std::filesystem::path& path);

}  // namespace a3s
