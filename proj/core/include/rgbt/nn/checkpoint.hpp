// Single-file checkpoint format: versioned header with a free-form JSON
// metadata blob, followed by named double tensors.
//
//   magic "RGBTCKPT" | u32 version | u64 meta_len | meta bytes (JSON)
//   u64 tensor_count | per tensor: u64 name_len, name, u32 rank,
//   i64 dims[rank], f64 data[...]
//
// All integers little-endian.
#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rgbt/nn/tensor.hpp"

namespace rgbt::nn {

struct Checkpoint {
  std::string meta;  // JSON string; producer-defined contents
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace rgbt::nn
