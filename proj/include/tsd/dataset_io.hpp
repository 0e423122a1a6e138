#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsd/datagen.hpp"

namespace tsd {

// SDS1 container (little-endian):
//   magic "SDS1", u32 version = 1, u32 m, u64 count, u64 master_seed,
//   f64 snr_db, then per record:
//   f32 blend_c, blend_s, blend_o; u64 sample_seed;
//   f32[m] f, c, s, o, n.
struct DatasetHeader {
  std::uint32_t version = 1;
  std::uint32_t m = 0;
  std::uint64_t count = 0;
  std::uint64_t master_seed = 0;
  double snr_db = 0.0;
};

void write_sds1(const std::string& path, const DatasetHeader& header,
                const std::vector<DecomposedSample>& samples);

struct Dataset {
  DatasetHeader header;
  std::vector<DecomposedSample> samples;
};

Dataset read_sds1(const std::string& path);

// One sample as CSV: header row then m rows of f,c,s,o,n.
void write_sample_csv(const std::string& path, const DecomposedSample& sample);

}  // namespace tsd
