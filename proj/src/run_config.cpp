#include "tsd/run_config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "tsd/errors.hpp"

namespace tsd {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  std::size_t b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

double parse_number(const std::string& token) {
  const std::string t = trim(token);
  const std::size_t slash = t.find('/');
  try {
    if (slash != std::string::npos) {
      const double num = std::stod(t.substr(0, slash));
      const double den = std::stod(t.substr(slash + 1));
      if (den == 0.0) throw ConfigError("blend fraction with zero denominator: '" + t + "'");
      return num / den;
    }
    return std::stod(t);
  } catch (const std::logic_error&) {
    throw ConfigError("not a number: '" + t + "'");
  }
}

}  // namespace

std::vector<Blend> parse_blend_list(const std::string& text) {
  std::vector<Blend> rows;
  std::stringstream ss(text);
  std::string row;
  while (std::getline(ss, row, ';')) {
    if (trim(row).empty()) continue;
    std::stringstream rs(row);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(rs, cell, ',')) vals.push_back(parse_number(cell));
    if (vals.size() != 3)
      throw ConfigError("blend row '" + row + "' must have exactly three factors");
    rows.push_back(Blend{vals[0], vals[1], vals[2]});
  }
  if (rows.empty()) throw ConfigError("blend list is empty");
  return rows;
}

const std::vector<std::string>& RunConfig::known_keys() {
  static const std::vector<std::string> keys = {
      // model
      "m", "d", "layers", "heads", "chunk_size", "adapter", "dropout", "zero_init_head",
      "output_kernel", "scale_dk",
      // training
      "lr", "batch_size", "epochs", "max_steps", "scheduler", "seed",
      // generation
      "count", "snr", "master_seed", "sigma_rule", "blend_list", "smooth_n_min", "smooth_n_max",
      "smooth_k_min", "smooth_k_max", "osc_n_min", "osc_n_max", "osc_k_min", "osc_k_max",
      "cartoon_d_min", "cartoon_d_max", "cartoon_a_min", "cartoon_a_max",
      // paths
      "data", "val", "test", "out", "ckpt", "log"};
  return keys;
}

bool RunConfig::is_known(const std::string& key) {
  const auto& keys = known_keys();
  return std::find(keys.begin(), keys.end(), key) != keys.end();
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!is_known(key)) throw ConfigError("unknown configuration key '" + key + "'");
  values_[key] = trim(value);
}

void RunConfig::merge(const RunConfig& overrides) {
  for (const auto& [k, v] : overrides.values_) values_[k] = v;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value, got '" +
                        line + "'");
    const std::string key = trim(line.substr(0, eq));
    try {
      cfg.set(key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open config file '" + path + "'");
  std::string text(std::istreambuf_iterator<char>(is), {});
  return parse(text);
}

std::string RunConfig::get_str(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

long RunConfig::get_int(const std::string& key, long fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    const long v = std::stol(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(it->second);
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + it->second + "'");
  }
}

double RunConfig::get_real(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return parse_number(it->second);
  } catch (const ConfigError&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + it->second + "'");
  }
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + key + "': expected a boolean, got '" + v + "'");
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const std::string& key : known_keys()) {
    auto it = values_.find(key);
    if (it == values_.end()) continue;
    out += key + " = " + it->second + "\n";
  }
  return out;
}

ModelConfig RunConfig::model() const {
  ModelConfig cfg;
  cfg.input_len = int(get_int("m", 512));
  cfg.token_dim = int(get_int("d", 512));
  cfg.num_layers = int(get_int("layers", 4));
  cfg.num_heads = int(get_int("heads", 8));
  cfg.chunk_size = int(get_int("chunk_size", 1));
  cfg.adapter = adapter_from_name(get_str("adapter", "no_chunks"));
  cfg.dropout_p = get_real("dropout", 0.1);
  cfg.zero_init_head = get_bool("zero_init_head", false);
  cfg.output_kernel = int(get_int("output_kernel", 3));
  cfg.scale_by_head_dim = get_bool("scale_dk", false);
  cfg.validate();
  return cfg;
}

TrainConfig RunConfig::training() const {
  TrainConfig cfg;
  cfg.lr = get_real("lr", 1e-4);
  cfg.batch_size = int(get_int("batch_size", 64));
  cfg.epochs = get_int("epochs", 15000);
  cfg.max_steps = get_int("max_steps", 0);
  cfg.schedule = schedule_from_name(get_str("scheduler", "constant"));
  cfg.seed = std::uint64_t(get_int("seed", 0));
  cfg.validate();
  return cfg;
}

GenSpecs RunConfig::gen_specs() const {
  GenSpecs specs;
  specs.smooth.n_min = int(get_int("smooth_n_min", 1));
  specs.smooth.n_max = int(get_int("smooth_n_max", 3));
  specs.smooth.k_min = int(get_int("smooth_k_min", 2));
  specs.smooth.k_max = int(get_int("smooth_k_max", 7));
  specs.oscillatory.n_min = int(get_int("osc_n_min", 1));
  specs.oscillatory.n_max = int(get_int("osc_n_max", 3));
  specs.oscillatory.k_min = int(get_int("osc_k_min", 70));
  specs.oscillatory.k_max = int(get_int("osc_k_max", 80));
  specs.cartoon.d_min = int(get_int("cartoon_d_min", 40));
  specs.cartoon.d_max = int(get_int("cartoon_d_max", 50));
  specs.cartoon.a_min = get_real("cartoon_a_min", 0.5);
  specs.cartoon.a_max = get_real("cartoon_a_max", 1.0);
  const std::string rule = get_str("sigma_rule", "sqrt_m");
  if (rule == "sqrt_m")
    specs.sigma_rule = SigmaRule::sqrt_m;
  else if (rule == "printed_m")
    specs.sigma_rule = SigmaRule::printed_m;
  else
    throw ConfigError("key 'sigma_rule': expected sqrt_m or printed_m, got '" + rule + "'");
  return specs;
}

std::vector<Blend> RunConfig::blends() const {
  const std::string text = get_str("blend_list", "");
  return text.empty() ? default_blend_list() : parse_blend_list(text);
}

}  // namespace tsd
