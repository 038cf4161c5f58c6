#pragma once

#include <map>
#include <string>

#include "cmil/nn.hpp"

namespace cmil {

// Parameter checkpoint file: magic "CMILCKPT", version u32, then named
// blocks (name length u32, UTF-8 name, rank u32, dims u32 each, row-major
// f64 payload), little-endian throughout.
inline constexpr char kCheckpointMagic[8] = {'C', 'M', 'I', 'L', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const std::vector<NamedParam>& params);

// Loads all blocks; throws with a precise message on bad magic, unsupported
// version, or truncation. Never partially populates the result.
std::map<std::string, Tensor> load_checkpoint_raw(const std::string& path);

// Loads into existing parameters by name; every parameter must be present
// with a matching shape.
void load_checkpoint(const std::string& path, const std::vector<NamedParam>& params);

}  // namespace cmil
