#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "degflow/tensor.hpp"

namespace degflow {

// Flat binary tensor container.
//
// Layout (all integers little-endian):
//   magic "DGFW" | version u32 | tensor count u32
//   per tensor: name length u32 | UTF-8 name | rank u32 | dims u32 each |
//               raw little-endian float32 data
//
// Round-trips bit-exactly.
struct CheckpointEntry {
  std::string name;
  Tensor<float> tensor;
};

constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<CheckpointEntry>& entries);

std::vector<CheckpointEntry> load_checkpoint(const std::filesystem::path& path);

// Lookup helper; throws DataError when absent.
const Tensor<float>& checkpoint_get(const std::vector<CheckpointEntry>& entries,
                                    const std::string& name);

bool checkpoint_has(const std::vector<CheckpointEntry>& entries, const std::string& name);

}  // namespace degflow
