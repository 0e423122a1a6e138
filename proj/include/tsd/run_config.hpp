#pragma once

#include <map>
#include <string>
#include <vector>

#include "tsd/datagen.hpp"
#include "tsd/model.hpp"
#include "tsd/training.hpp"

namespace tsd {

// Flat key=value configuration covering model, training and generation
// settings plus optional file paths. Unknown keys are rejected and the
// serialized form round-trips losslessly.
class RunConfig {
 public:
  static const std::vector<std::string>& known_keys();
  static bool is_known(const std::string& key);

  static RunConfig parse(const std::string& text);
  static RunConfig parse_file(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value);
  void merge(const RunConfig& overrides);

  std::string get_str(const std::string& key, const std::string& fallback) const;
  long get_int(const std::string& key, long fallback) const;
  double get_real(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // canonical key order, "key = value" per line
  std::string serialize() const;

  ModelConfig model() const;
  TrainConfig training() const;
  GenSpecs gen_specs() const;
  std::vector<Blend> blends() const;

 private:
  std::map<std::string, std::string> values_;
};

// "1,0,0;1/3,2/3,0;..." -> blend rows; plain decimals or p/q fractions.
std::vector<Blend> parse_blend_list(const std::string& text);

}  // namespace tsd
