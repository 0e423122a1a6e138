#include "tsd/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <thread>

namespace tsd {

void BandSpec::validate(int m) const {
  if (n_min < 1 || n_min > n_max)
    throw ConfigError("band spec: need 1 <= n_min <= n_max, got [" + std::to_string(n_min) + ", " +
                      std::to_string(n_max) + "]");
  if (k_min < 1 || k_min > k_max || k_max >= m / 2)
    throw ConfigError("band spec: need 1 <= k_min <= k_max < m/2, got [" + std::to_string(k_min) +
                      ", " + std::to_string(k_max) + "] with m = " + std::to_string(m));
}

void CartoonSpec::validate(int m) const {
  if (d_min < 1 || d_min > d_max || d_max > m)
    throw ConfigError("cartoon spec: need 1 <= d_min <= d_max <= m, got [" +
                      std::to_string(d_min) + ", " + std::to_string(d_max) + "]");
  if (a_min <= 0.0 || a_min > a_max)
    throw ConfigError("cartoon spec: need 0 < a_min <= a_max");
}

void GenSpecs::validate(int m) const {
  smooth.validate(m);
  oscillatory.validate(m);
  cartoon.validate(m);
}

const std::vector<Blend>& default_blend_list() {
  static const std::vector<Blend> rows = {
      {1, 0, 0},
      {0, 1, 0},
      {0, 0, 1},
      {1.0 / 3, 2.0 / 3, 0},
      {2.0 / 3, 1.0 / 3, 0},
      {0, 1.0 / 3, 2.0 / 3},
      {0, 2.0 / 3, 1.0 / 3},
      {1.0 / 3, 0, 2.0 / 3},
      {2.0 / 3, 0, 1.0 / 3},
      {1.0 / 3, 1.0 / 3, 1.0 / 3},
      {0.2, 0.2, 0.6},
      {0.6, 0.2, 0.2},
      {0.2, 0.6, 0.2},
  };
  return rows;
}

Signal gen_oscillatory(const BandSpec& spec, int m, Rng& rng) {
  spec.validate(m);
  const int terms = static_cast<int>(rng.uniform_int(spec.n_min, spec.n_max));
  const int avail = spec.k_max - spec.k_min + 1;
  if (avail < terms)
    throw ConfigError("band spec: " + std::to_string(terms) + " distinct frequencies requested from " +
                      std::to_string(avail) + " available in [" + std::to_string(spec.k_min) + ", " +
                      std::to_string(spec.k_max) + "]");
  // distinct frequency indices: partial Fisher-Yates over the band
  std::vector<int> pool(avail);
  for (int i = 0; i < avail; ++i) pool[i] = spec.k_min + i;
  for (int i = 0; i < terms; ++i) {
    const int j = static_cast<int>(rng.uniform_int(i, avail - 1));
    std::swap(pool[i], pool[j]);
  }
  Signal x = Signal::Zero(m);
  for (int t = 0; t < terms; ++t) {
    const double omega = double(pool[t]) / double(m);
    const double a = rng.uniform01();
    const double b = rng.uniform01();
    for (int i = 0; i < m; ++i) {
      const double ang = 2.0 * std::numbers::pi * omega * double(i);
      x(i) += a * std::cos(ang) + b * std::sin(ang);
    }
  }
  return x;
}

Signal gen_cartoon(const CartoonSpec& spec, int m, Rng& rng) {
  spec.validate(m);
  Signal x = Signal::Zero(m);
  double level = 0.0;
  std::int64_t pos = 0;
  while (true) {
    pos += rng.uniform_int(spec.d_min, spec.d_max);
    if (pos >= m) break;
    const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
    level += sign * rng.uniform(spec.a_min, spec.a_max);
    // a jump shifts every sample from pos onward
    for (std::int64_t i = pos; i < m; ++i) x(i) = level;
  }
  return x;
}

Signal normalize(const Signal& x) {
  const double mu = x.mean();
  const double var = (x.array() - mu).square().sum() / double(x.size());
  if (!(var > 1e-20))
    throw DegenerateSignalError("normalize: signal variance is zero");
  return (x.array() - mu) / std::sqrt(var);
}

double noise_sigma(const Signal& clean, double snr_db, SigmaRule rule) {
  const double energy = std::sqrt((clean.array() - clean.mean()).square().sum());
  if (!(energy > 1e-12))
    throw DegenerateSignalError("noise_sigma: clean signal has no energy");
  const double denom = rule == SigmaRule::sqrt_m ? std::sqrt(double(clean.size()))
                                                 : double(clean.size());
  return std::pow(10.0, -snr_db / 20.0) * energy / denom;
}

double realized_snr_db(const Signal& clean, const Signal& noise) {
  const double se = (clean.array() - clean.mean()).square().sum();
  const double ne = noise.squaredNorm();
  return 10.0 * std::log10(se / ne);
}

namespace {

// streams 0..3 key the c/s/o/n generators; the extra level indexes redraws
// after a degenerate (constant) sample
template <typename Gen>
Signal normalized_component(std::uint64_t seed, std::uint64_t stream, Gen&& gen) {
  for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
    Rng rng(derive_seed(seed, stream, attempt));
    try {
      return normalize(gen(rng));
    } catch (const DegenerateSignalError&) {
      continue;
    }
  }
  throw DegenerateSignalError("component generation kept producing constant signals");
}

}  // namespace

DecomposedSample gen_sample(const Blend& blend, const GenSpecs& specs, double snr_db, int m,
                            std::uint64_t seed) {
  specs.validate(m);
  for (double b : {blend.c, blend.s, blend.o})
    if (b < 0.0 || b > 1.0)
      throw ConfigError("blending factors must lie in [0, 1]");
  if (blend.c <= 0.0 && blend.s <= 0.0 && blend.o <= 0.0)
    throw ConfigError("at least one blending factor must be positive");

  const Signal zero = Signal::Zero(m);
  Signal c = blend.c > 0.0 ? Signal(blend.c * normalized_component(seed, 0, [&](Rng& r) {
                               return gen_cartoon(specs.cartoon, m, r);
                             }))
                           : zero;
  Signal s = blend.s > 0.0 ? Signal(blend.s * normalized_component(seed, 1, [&](Rng& r) {
                               return gen_oscillatory(specs.smooth, m, r);
                             }))
                           : zero;
  Signal o = blend.o > 0.0 ? Signal(blend.o * normalized_component(seed, 2, [&](Rng& r) {
                               return gen_oscillatory(specs.oscillatory, m, r);
                             }))
                           : zero;
  const Signal clean = c + s + o;
  const double sigma = noise_sigma(clean, snr_db, specs.sigma_rule);
  Rng noise_rng(derive_seed(seed, 3, 0));
  Signal n(m);
  for (int i = 0; i < m; ++i) n(i) = sigma * noise_rng.normal();

  DecomposedSample out;
  out.f = (clean + n).cast<float>();
  out.c = c.cast<float>();
  out.s = s.cast<float>();
  out.o = o.cast<float>();
  out.n = n.cast<float>();
  out.blend_c = static_cast<float>(blend.c);
  out.blend_s = static_cast<float>(blend.s);
  out.blend_o = static_cast<float>(blend.o);
  out.snr_db = snr_db;
  out.seed = seed;
  return out;
}

std::vector<DecomposedSample> gen_dataset(std::int64_t count, const std::vector<Blend>& blends,
                                          const GenSpecs& specs, double snr_db, int m,
                                          std::uint64_t master_seed, int workers) {
  if (count < 1) throw ConfigError("gen_dataset: count must be >= 1");
  if (blends.empty()) throw ConfigError("gen_dataset: blend list is empty");
  specs.validate(m);
  std::vector<DecomposedSample> out(static_cast<std::size_t>(count));
  auto fill = [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) {
      const Blend& b = blends[static_cast<std::size_t>(i % std::int64_t(blends.size()))];
      out[static_cast<std::size_t>(i)] = gen_sample(b, specs, snr_db, m, derive_seed(master_seed, std::uint64_t(i)));
    }
  };
  workers = std::max(1, workers);
  if (workers == 1) {
    fill(0, count);
  } else {
    std::vector<std::thread> pool;
    const std::int64_t chunk = (count + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const std::int64_t lo = std::int64_t(w) * chunk;
      const std::int64_t hi = std::min<std::int64_t>(count, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back(fill, lo, hi);
    }
    for (auto& t : pool) t.join();
  }
  return out;
}

}  // namespace tsd
