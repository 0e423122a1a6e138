#pragma once

#include <string>

#include "tsd/model.hpp"

namespace tsd {

// TSDC container (little-endian):
//   magic "TSDC", u32 version = 1,
//   config: u32 input_len, token_dim, num_layers, num_heads, chunk_size,
//           u8 adapter, f64 dropout_p, u8 zero_init_head, u32 output_kernel,
//           u8 scale_by_head_dim,
//   note string (u32 length + bytes) recording the component order,
//   u64 param_count, u32 tensor count, then per tensor:
//   u32 name length + name, u8 rank, u32 dims..., f32 data.
void save_checkpoint(const std::string& path, const ModelParams<float>& params);

ModelParams<float> load_checkpoint(const std::string& path);

}  // namespace tsd
