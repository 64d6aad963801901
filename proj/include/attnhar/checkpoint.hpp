#pragma once

#include <string>
#include <utility>
#include <vector>

#include "attnhar/model.hpp"

namespace attnhar {

struct CheckpointMeta {
  Dims dims;
  Variant variant = Variant::plain;
  bool stacked = false;
  bool cell_bias = false;
  std::vector<std::size_t> modality_map;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  std::vector<std::string> class_names;  // optional
};

// Binary little-endian format:
//   magic "ATTN" | version u32 | metadata length u64 | metadata (UTF-8 JSON)
//   then one record per tensor: name length u32 | name | rank u32 |
//   dims u64 each | values as raw IEEE-754 doubles.
// Round trips are bit-exact.
void save_checkpoint(const std::string& path, const ModelParams& params,
                     const CheckpointMeta& meta);

// Distinct CheckpointError kinds for bad magic, unsupported version,
// truncation, and tensor-shape mismatches against the metadata.
std::pair<ModelParams, CheckpointMeta> load_checkpoint(const std::string& path);

}  // namespace attnhar
