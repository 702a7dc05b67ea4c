#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "a3s/autodiff/params.hpp"

namespace a3s {

// Binary layout (all integers u32 little-endian, data IEEE-754 float64 LE):
//   "A3S1" version count { name_len name rank dims[rank] data[prod(dims)] }*
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params);

/// Raw contents of a checkpoint file, in file order by name.
std::map<std::string, Tensor> read_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint values into an existing parameter set. Every name and
/// shape must match exactly; otherwise throws LoadError listing all mismatches.
void load_checkpoint(const std::filesystem::path& path, ParameterSet& params);

}  // namespace a3s
