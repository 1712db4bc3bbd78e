#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "xsm/tensor.hpp"

namespace xsm {

// Flat binary container of named f32 tensors.
// Layout: magic "XSMCKPT1", u64 count, then per tensor:
//   u64 name length, UTF-8 name bytes, u64 rank, u64 dims..., f32 payload.
// All integers and floats little-endian.
void save_checkpoint(const std::string& path, const std::vector<std::pair<std::string, const Tensor*>>& tensors);
std::map<std::string, Tensor> load_checkpoint(const std::string& path);

uint64_t checkpoint_hash(const std::vector<std::pair<std::string, const Tensor*>>& tensors);

}  // namespace xsm
