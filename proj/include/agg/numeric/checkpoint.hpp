#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "agg/numeric/layers.hpp"

namespace agg::nn {

// Checkpoint file layout:
//   8 bytes   magic "AGGCKPT1"
//   8 bytes   manifest length N, little-endian u64
//   N bytes   JSON manifest {"format":1,"params":[{"name","shape","offset","count"}]}
//   payload   all values as little-endian IEEE-754 binary64, offsets in bytes
//             from the start of the payload
void save_checkpoint(const std::filesystem::path& path, const ParamList& params);

// Loads values into `params`, matched by name; shapes must agree and every
// parameter must be present.
void load_checkpoint(const std::filesystem::path& path, const ParamList& params);

struct CheckpointEntry {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path);

}  // namespace agg::nn
