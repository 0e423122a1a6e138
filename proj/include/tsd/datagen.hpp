#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "tsd/errors.hpp"
#include "tsd/rng.hpp"

namespace tsd {

using Signal = Eigen::VectorXd;

inline constexpr int kDefaultSignalLen = 512;
inline constexpr double kDefaultSnrDb = 20.0;

// Frequency band for a random trigonometric sum: the number of terms is
// drawn from [n_min, n_max] and the frequency indices from [k_min, k_max].
struct BandSpec {
  int n_min = 1;
  int n_max = 3;
  int k_min = 1;
  int k_max = 1;
  void validate(int m) const;
};

// Jump process for the piecewise-constant component: jump spacing in
// samples, jump magnitude range.
struct CartoonSpec {
  int d_min = 40;
  int d_max = 50;
  double a_min = 0.5;
  double a_max = 1.0;
  void validate(int m) const;
};

// How the noise level is derived from the target SNR. `sqrt_m` realizes the
// requested SNR in expectation; `printed_m` divides by M instead and is kept
// as a compatibility switch (it yields a much smaller noise level).
enum class SigmaRule { sqrt_m, printed_m };

struct GenSpecs {
  BandSpec smooth{1, 3, 2, 7};
  BandSpec oscillatory{1, 3, 70, 80};
  CartoonSpec cartoon{};
  SigmaRule sigma_rule = SigmaRule::sqrt_m;
  void validate(int m) const;
};

struct Blend {
  double c = 0.0;
  double s = 0.0;
  double o = 0.0;
};

// The 13 component mixtures used throughout: pure components, two-way and
// three-way mixes.
const std::vector<Blend>& default_blend_list();

// One observation with its ground-truth decomposition. Components are stored
// already scaled by their blending factors, in single precision (the storage
// format), so f == c + s + o + n holds to float round-off.
struct DecomposedSample {
  Eigen::VectorXf f, c, s, o, n;
  float blend_c = 0, blend_s = 0, blend_o = 0;
  double snr_db = 0;
  std::uint64_t seed = 0;
};

// Random trigonometric sum over distinct frequency indices; sine/cosine
// coefficients uniform in [0, 1].
Signal gen_oscillatory(const BandSpec& spec, int m, Rng& rng);

// Piecewise-constant jump process, level 0 before the first jump. Stops when
// the next jump would fall at or beyond m.
Signal gen_cartoon(const CartoonSpec& spec, int m, Rng& rng);

// Zero mean, unit variance (biased, divisor m). Throws DegenerateSignalError
// on (near-)constant input.
Signal normalize(const Signal& x);

// Noise standard deviation realizing `snr_db` for the given clean signal.
double noise_sigma(const Signal& clean, double snr_db, SigmaRule rule = SigmaRule::sqrt_m);

// 10*log10 of mean-removed clean energy over noise energy.
double realized_snr_db(const Signal& clean, const Signal& noise);

// Fully seeded synthesis of one sample. Components with a zero blending
// factor are stored as exact zeros and their generator stream is untouched,
// so seeds stay aligned across different blends.
DecomposedSample gen_sample(const Blend& blend, const GenSpecs& specs, double snr_db, int m,
                            std::uint64_t seed);

// `count` samples; sample i uses seed derive_seed(master_seed, i) and blend
// row i % blends.size(). Generation is pure per sample, so any worker count
// produces identical content.
std::vector<DecomposedSample> gen_dataset(std::int64_t count, const std::vector<Blend>& blends,
                                          const GenSpecs& specs, double snr_db, int m,
                                          std::uint64_t master_seed, int workers = 1);

}  // namespace tsd
