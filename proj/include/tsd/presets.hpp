#pragma once

#include <string>
#include <vector>

#include "tsd/run_config.hpp"

namespace tsd {

struct Preset {
  std::string name;
  std::string description;
  RunConfig config;
};

const std::vector<Preset>& preset_list();
const Preset& find_preset(const std::string& name);  // UsageError if unknown
std::string preset_names();                          // comma-separated, for --help

// Published accuracy of the corresponding full-scale runs. These need the
// full training budget (tens of GPU-hours); they are reference targets, not
// results this build reproduces at desk scale.
struct ReferenceTarget {
  std::string preset;    // configuration that attempts this row
  std::string test_set;  // evaluation subset it was reported on
  double rmse_c, rmse_s, rmse_o, rmse_n, rmse_avg;
};

const std::vector<ReferenceTarget>& reference_targets();

}  // namespace tsd
