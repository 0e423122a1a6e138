#include "tsd/presets.hpp"

#include "tsd/errors.hpp"

namespace tsd {

namespace {

RunConfig make(std::initializer_list<std::pair<const char*, const char*>> pairs) {
  RunConfig cfg;
  for (const auto& [k, v] : pairs) cfg.set(k, v);
  return cfg;
}

// the small-model study grid: layers = 2, reduced 2000/500/500 dataset
RunConfig study_base() {
  return make({{"m", "512"},
               {"d", "512"},
               {"layers", "2"},
               {"heads", "8"},
               {"dropout", "0.1"},
               {"lr", "1e-4"},
               {"batch_size", "64"},
               {"epochs", "15000"},
               {"count", "3000"},
               {"snr", "20"}});
}

// full-scale recipe: layers = 4, 12000/2000/4000 dataset
RunConfig full_base() {
  return make({{"m", "512"},
               {"d", "512"},
               {"layers", "4"},
               {"heads", "8"},
               {"dropout", "0.1"},
               {"lr", "1e-4"},
               {"batch_size", "64"},
               {"epochs", "15000"},
               {"count", "18000"},
               {"snr", "20"}});
}

std::vector<Preset> build_presets() {
  std::vector<Preset> out;
  auto study = [&](const char* name, const char* desc,
                   std::initializer_list<std::pair<const char*, const char*>> extra) {
    Preset p{name, desc, study_base()};
    for (const auto& [k, v] : extra) p.config.set(k, v);
    out.push_back(std::move(p));
  };

  study("ablation-row1", "no chunking (S=1)", {{"adapter", "no_chunks"}, {"chunk_size", "1"}});
  study("ablation-row2", "summed chunk embeddings, S=4", {{"adapter", "sum"}, {"chunk_size", "4"}});
  study("ablation-row3", "concatenated chunk embeddings, S=4",
        {{"adapter", "cat"}, {"chunk_size", "4"}});
  study("ablation-row4", "channel-reshaped convolution, S=4",
        {{"adapter", "conv"}, {"chunk_size", "4"}});
  study("ablation-row5", "channel-reshaped convolution, S=2",
        {{"adapter", "conv"}, {"chunk_size", "2"}});
  study("ablation-row6", "channel-reshaped convolution, S=8",
        {{"adapter", "conv"}, {"chunk_size", "8"}});
  study("ablation-row7", "conv S=4 with zero-initialized head",
        {{"adapter", "conv"}, {"chunk_size", "4"}, {"zero_init_head", "true"}});
  study("ablation-row8", "conv S=4, zero-init head, one-cycle schedule",
        {{"adapter", "conv"},
         {"chunk_size", "4"},
         {"zero_init_head", "true"},
         {"scheduler", "one_cycle"}});
  study("ablation-row9", "no chunking with zero-initialized head",
        {{"adapter", "no_chunks"}, {"chunk_size", "1"}, {"zero_init_head", "true"}});
  study("ablation-row10", "no chunking, zero-init head, one-cycle schedule",
        {{"adapter", "no_chunks"},
         {"chunk_size", "1"},
         {"zero_init_head", "true"},
         {"scheduler", "one_cycle"}});

  {
    Preset p{"tsd-chunks", "full-scale chunked variant (conv, S=4, 4 layers)", full_base()};
    p.config.set("adapter", "conv");
    p.config.set("chunk_size", "4");
    out.push_back(std::move(p));
  }
  {
    Preset p{"tsd-no-chunks", "full-scale no-chunking variant with zero-init head", full_base()};
    p.config.set("adapter", "no_chunks");
    p.config.set("chunk_size", "1");
    p.config.set("zero_init_head", "true");
    out.push_back(std::move(p));
  }
  {
    Preset p{"overfit",
             "sanity run: memorize 8 short signals in 2000 steps on one core",
             make({{"m", "128"},
                   {"d", "64"},
                   {"layers", "2"},
                   {"heads", "4"},
                   {"adapter", "conv"},
                   {"chunk_size", "4"},
                   {"dropout", "0"},
                   {"lr", "1e-4"},
                   {"batch_size", "8"},
                   {"epochs", "2000"},
                   {"max_steps", "2000"},
                   {"count", "8"},
                   {"snr", "20"},
                   {"osc_k_min", "20"},
                   {"osc_k_max", "30"},
                   {"cartoon_d_min", "10"},
                   {"cartoon_d_max", "20"}})};
    out.push_back(std::move(p));
  }
  {
    Preset p{"desk",
             "reduced study configuration sized for a CPU-hours budget",
             make({{"m", "512"},
                   {"d", "256"},
                   {"layers", "2"},
                   {"heads", "8"},
                   {"adapter", "conv"},
                   {"chunk_size", "4"},
                   {"dropout", "0.1"},
                   {"zero_init_head", "true"},
                   {"lr", "1e-4"},
                   {"batch_size", "16"},
                   {"epochs", "4"},
                   {"count", "3000"},
                   {"snr", "20"}})};
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

const std::vector<Preset>& preset_list() {
  static const std::vector<Preset> presets = build_presets();
  return presets;
}

const Preset& find_preset(const std::string& name) {
  for (const Preset& p : preset_list())
    if (p.name == name) return p;
  throw UsageError("unknown preset '" + name + "' (available: " + preset_names() + ")");
}

std::string preset_names() {
  std::string out;
  for (const Preset& p : preset_list()) {
    if (!out.empty()) out += ", ";
    out += p.name;
  }
  return out;
}

const std::vector<ReferenceTarget>& reference_targets() {
  // RMSE in absolute units (tables report x 1e-3)
  static const std::vector<ReferenceTarget> targets = {
      {"ablation-row1", "500", 5.996e-3, 5.933e-3, 1.840e-3, 2.329e-3, 4.024e-3},
      {"ablation-row2", "500", 6.654e-3, 5.900e-3, 1.211e-3, 4.338e-3, 4.526e-3},
      {"ablation-row3", "500", 7.096e-3, 6.164e-3, 1.314e-3, 3.667e-3, 4.561e-3},
      {"ablation-row4", "500", 6.821e-3, 5.572e-3, 1.061e-3, 3.546e-3, 4.250e-3},
      {"ablation-row5", "500", 6.938e-3, 6.133e-3, 1.321e-3, 2.838e-3, 4.308e-3},
      {"ablation-row6", "500", 6.901e-3, 5.994e-3, 1.042e-3, 4.364e-3, 4.575e-3},
      {"ablation-row7", "500", 6.913e-3, 5.722e-3, 1.124e-3, 3.577e-3, 4.334e-3},
      {"ablation-row8", "500", 7.266e-3, 5.809e-3, 1.158e-3, 3.702e-3, 4.484e-3},
      {"ablation-row9", "500", 6.077e-3, 5.890e-3, 1.526e-3, 2.369e-3, 3.966e-3},
      {"ablation-row10", "500", 6.215e-3, 5.796e-3, 1.701e-3, 2.531e-3, 4.061e-3},
      {"tsd-chunks", "13 signals", 4.248e-3, 3.853e-3, 0.879e-3, 3.020e-3, 2.999e-3},
      {"tsd-no-chunks", "13 signals", 2.983e-3, 2.873e-3, 0.997e-3, 1.762e-3, 2.153e-3},
      {"tsd-chunks", "4000 signals", 4.107e-3, 3.757e-3, 0.686e-3, 2.924e-3, 2.869e-3},
      {"tsd-no-chunks", "4000 signals", 3.230e-3, 3.092e-3, 0.843e-3, 1.811e-3, 2.244e-3},
  };
  return targets;
}

}  // namespace tsd
