#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <tsd/datagen.hpp>
#include <tsd/dataset_io.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "oracles.hpp"

using namespace tsd;

namespace {

std::filesystem::path tmp_dir() {
  auto p = std::filesystem::temp_directory_path() / "tsd_datagen_test";
  std::filesystem::create_directories(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

// band/jump ranges that stay feasible for short test signals
GenSpecs small_specs() {
  GenSpecs specs;
  specs.smooth = BandSpec{1, 2, 2, 5};
  specs.oscillatory = BandSpec{1, 2, 8, 12};
  specs.cartoon = CartoonSpec{6, 12, 0.5, 1.0};
  return specs;
}

int count_jumps(const Eigen::VectorXf& c) {
  int jumps = 0;
  for (int i = 1; i < c.size(); ++i)
    if (c(i) != c(i - 1)) ++jumps;
  return jumps;
}

}  // namespace

TEST_CASE("gen_oscillatory: single-term band matches the closed form") {
  const int m = 64;
  BandSpec spec{1, 1, 1, 1};
  Rng rng(21);
  Signal x = gen_oscillatory(spec, m, rng);
  // with one term at k=1: x_i = a cos(2 pi i / m) + b sin(2 pi i / m),
  // so a = x(0) and b = x(m/4)
  const double a = x(0), b = x(m / 4);
  CHECK(a >= 0.0);
  CHECK(a <= 1.0);
  CHECK(b >= 0.0);
  CHECK(b <= 1.0);
  for (int i = 0; i < m; ++i) {
    const double ang = 2.0 * M_PI * double(i) / double(m);
    CHECK(x(i) == doctest::Approx(a * std::cos(ang) + b * std::sin(ang)).epsilon(1e-12));
  }
}

TEST_CASE("gen_oscillatory: spectral energy confined to the band") {
  const int m = 512;
  auto check_band = [&](const BandSpec& spec) {
    for (std::uint64_t seed : {11u, 22u, 33u}) {
      Rng rng(seed);
      Signal x = normalize(gen_oscillatory(spec, m, rng));
      auto dft = oracle::naive_dft(x);
      double peak = 0.0;
      for (auto& z : dft) peak = std::max(peak, std::abs(z));
      for (int bin = 0; bin < m; ++bin) {
        const int folded = std::min(bin, m - bin);
        if (folded >= spec.k_min && folded <= spec.k_max) continue;
        INFO("bin ", bin);
        CHECK(std::abs(dft[std::size_t(bin)]) < 1e-9 * peak);
      }
    }
  };
  check_band(BandSpec{1, 3, 2, 7});
  check_band(BandSpec{1, 3, 70, 80});
}

TEST_CASE("gen_oscillatory: infeasible spec rejected") {
  BandSpec spec{5, 5, 3, 4};  // five distinct frequencies from two
  Rng rng(1);
  CHECK_THROWS_AS(gen_oscillatory(spec, 64, rng), ConfigError);
}

TEST_CASE("gen_cartoon: degenerate spacing gives a constant signal") {
  CartoonSpec spec{512, 512, 0.5, 1.0};
  Rng rng(5);
  Signal x = gen_cartoon(spec, 512, rng);
  CHECK(x.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gen_cartoon: jump count and spacing stay in range") {
  CartoonSpec spec{40, 50, 0.5, 1.0};
  const int m = 512;
  std::set<int> counts;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    Rng rng(derive_seed(99, seed));
    Signal x = gen_cartoon(spec, m, rng);
    int jumps = 0;
    int last = 0;
    for (int i = 1; i < m; ++i) {
      if (x(i) != x(i - 1)) {
        const int dist = i - last;
        CHECK(dist >= 40);
        CHECK(dist <= 50);
        last = i;
        ++jumps;
      }
    }
    counts.insert(jumps);
  }
  for (int c : counts) {
    CHECK(c >= 10);
    CHECK(c <= 12);
  }
}

TEST_CASE("normalize: fixed points and stats") {
  Signal a(4);
  a << 1, -1, 1, -1;
  CHECK((normalize(a) - a).cwiseAbs().maxCoeff() < 1e-12);

  Signal b(2);
  b << 0, 2;
  Signal bn = normalize(b);
  CHECK(bn(0) == doctest::Approx(-1.0));
  CHECK(bn(1) == doctest::Approx(1.0));

  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    Signal x(256);
    for (int i = 0; i < 256; ++i) x(i) = rng.uniform(-3, 3);
    Signal y = normalize(x);
    CHECK(std::abs(oracle::mean(y)) < 1e-7);
    CHECK(std::abs(oracle::var_biased(y) - 1.0) < 1e-6);
  }

  CHECK_THROWS_AS(normalize(Signal::Constant(8, 3.0)), DegenerateSignalError);
}

TEST_CASE("noise_sigma: closed-form value at 20 dB") {
  // unit-energy signal: normalized (variance 1) scaled by 1/sqrt(m)
  const int m = 512;
  Rng rng(3);
  Signal x(m);
  for (int i = 0; i < m; ++i) x(i) = rng.uniform(-1, 1);
  Signal unit = normalize(x) / std::sqrt(double(m));
  CHECK(std::sqrt((unit.array() - unit.mean()).square().sum()) == doctest::Approx(1.0));
  const double sigma = noise_sigma(unit, 20.0);
  CHECK(sigma == doctest::Approx(4.4194e-3).epsilon(1e-4));

  // realized SNR over repeated draws stays on target
  double snr_sum = 0.0;
  Rng noise(7);
  const int draws = 1000;
  for (int d = 0; d < draws; ++d) {
    Signal n(m);
    for (int i = 0; i < m; ++i) n(i) = sigma * noise.normal();
    snr_sum += realized_snr_db(unit, n);
  }
  CHECK(snr_sum / draws == doctest::Approx(20.0).epsilon(0.005));
}

TEST_CASE("noise_sigma: limits and compatibility rule") {
  Signal x(8);
  x << 1, -1, 1, -1, 1, -1, 1, -1;
  CHECK(noise_sigma(x, 1e6) == doctest::Approx(0.0));
  // printed variant divides by m instead of sqrt(m)
  CHECK(noise_sigma(x, 20.0, SigmaRule::printed_m) ==
        doctest::Approx(noise_sigma(x, 20.0) / std::sqrt(8.0)));
  CHECK_THROWS_AS(noise_sigma(Signal::Constant(8, 1.0), 20.0), DegenerateSignalError);
}

TEST_CASE("noise_sigma: 0 dB puts noise energy at signal energy") {
  const int m = 512;
  Rng rng(13);
  Signal x(m);
  for (int i = 0; i < m; ++i) x(i) = rng.uniform(-1, 1);
  x = normalize(x);
  const double sig_energy = std::sqrt((x.array() - x.mean()).square().sum());
  const double sigma = noise_sigma(x, 0.0);
  double norm_sum = 0.0;
  const int draws = 300;
  Rng noise(29);
  for (int d = 0; d < draws; ++d) {
    Signal n(m);
    for (int i = 0; i < m; ++i) n(i) = sigma * noise.normal();
    norm_sum += n.norm();
  }
  CHECK(norm_sum / draws == doctest::Approx(sig_energy).epsilon(0.02));
}

TEST_CASE("gen_sample: single-component mixture stores exact zeros") {
  GenSpecs specs;
  DecomposedSample smp = gen_sample(Blend{1, 0, 0}, specs, 20.0, 512, 77);
  CHECK(smp.s.cwiseAbs().maxCoeff() == 0.0f);
  CHECK(smp.o.cwiseAbs().maxCoeff() == 0.0f);
  // f - n is the cartoon part: piecewise constant with in-range plateaus
  const int jumps = count_jumps(smp.c);
  CHECK(jumps >= 10);
  CHECK(jumps <= 12);
  Eigen::VectorXf resid = smp.f - smp.n - smp.c;
  CHECK(resid.cwiseAbs().maxCoeff() < 1e-5f);
}

TEST_CASE("gen_sample: stored components rebuild the observation") {
  GenSpecs specs;
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    for (const Blend& b : default_blend_list()) {
      DecomposedSample smp = gen_sample(b, specs, 20.0, 512, seed);
      Eigen::VectorXf sum = smp.c + smp.s + smp.o + smp.n;
      CHECK((smp.f - sum).cwiseAbs().maxCoeff() < 1e-5f);
    }
  }
}

TEST_CASE("gen_sample: same seed is bit-identical, zero blend rejected") {
  GenSpecs specs;
  DecomposedSample a = gen_sample(Blend{0.2, 0.2, 0.6}, specs, 20.0, 512, 31);
  DecomposedSample b = gen_sample(Blend{0.2, 0.2, 0.6}, specs, 20.0, 512, 31);
  CHECK(std::memcmp(a.f.data(), b.f.data(), sizeof(float) * 512) == 0);
  CHECK(std::memcmp(a.n.data(), b.n.data(), sizeof(float) * 512) == 0);
  CHECK_THROWS_AS(gen_sample(Blend{0, 0, 0}, specs, 20.0, 512, 1), ConfigError);
}

TEST_CASE("gen_sample: equal three-way blend has variance near 1/3") {
  GenSpecs specs;
  double var_sum = 0.0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    DecomposedSample smp =
        gen_sample(Blend{1.0 / 3, 1.0 / 3, 1.0 / 3}, specs, 20.0, 512, derive_seed(555, std::uint64_t(t)));
    Eigen::VectorXd clean = (smp.c + smp.s + smp.o).cast<double>();
    var_sum += oracle::var_biased(clean);
  }
  CHECK(var_sum / trials == doctest::Approx(1.0 / 3).epsilon(0.03));
}

TEST_CASE("realized SNR across 1000 default-preset samples") {
  GenSpecs specs;
  double sum = 0.0;
  double worst = 0.0;
  const int count = 1000;
  const auto& blends = default_blend_list();
  for (int i = 0; i < count; ++i) {
    DecomposedSample smp = gen_sample(blends[std::size_t(i) % blends.size()], specs, 20.0, 512,
                                      derive_seed(2026, std::uint64_t(i)));
    const double snr =
        realized_snr_db((smp.f - smp.n).cast<double>(), smp.n.cast<double>());
    sum += snr;
    worst = std::max(worst, std::abs(snr - 20.0));
  }
  CHECK(std::abs(sum / count - 20.0) < 0.05);
  // single-draw scatter is chi-square with m dof: ~0.27 dB std at m = 512
  CHECK(worst < 1.5);
}

TEST_CASE("gen_dataset: round-robin blends and worker-count invariance") {
  GenSpecs specs = small_specs();
  auto ds1 = gen_dataset(13, default_blend_list(), specs, 20.0, 128, 42, 1);
  REQUIRE(ds1.size() == 13);
  for (std::size_t i = 0; i < 13; ++i) {
    CHECK(ds1[i].blend_c == float(default_blend_list()[i].c));
    CHECK(ds1[i].blend_s == float(default_blend_list()[i].s));
    CHECK(ds1[i].blend_o == float(default_blend_list()[i].o));
  }
  auto ds3 = gen_dataset(13, default_blend_list(), specs, 20.0, 128, 42, 3);
  auto dir = tmp_dir();
  DatasetHeader h{1, 128, 13, 42, 20.0};
  write_sds1((dir / "w1.sds").string(), h, ds1);
  write_sds1((dir / "w3.sds").string(), h, ds3);
  CHECK(slurp(dir / "w1.sds") == slurp(dir / "w3.sds"));
}

TEST_CASE("SDS1 round trip preserves every field") {
  GenSpecs specs = small_specs();
  auto ds = gen_dataset(7, default_blend_list(), specs, 20.0, 64, 9, 1);
  auto dir = tmp_dir();
  const std::string path = (dir / "roundtrip.sds").string();
  write_sds1(path, DatasetHeader{1, 64, 7, 9, 20.0}, ds);
  Dataset back = read_sds1(path);
  CHECK(back.header.m == 64);
  CHECK(back.header.count == 7);
  CHECK(back.header.master_seed == 9);
  CHECK(back.header.snr_db == 20.0);
  REQUIRE(back.samples.size() == 7);
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(back.samples[i].seed == ds[i].seed);
    CHECK(back.samples[i].blend_c == ds[i].blend_c);
    CHECK(std::memcmp(back.samples[i].f.data(), ds[i].f.data(), sizeof(float) * 64) == 0);
    CHECK(std::memcmp(back.samples[i].o.data(), ds[i].o.data(), sizeof(float) * 64) == 0);
  }
}

TEST_CASE("SDS1 reader rejects junk and truncation") {
  auto dir = tmp_dir();
  const std::string junk = (dir / "junk.bin").string();
  {
    std::ofstream os(junk, std::ios::binary);
    os << "not a dataset";
  }
  CHECK_THROWS_AS(read_sds1(junk), DataError);

  GenSpecs specs = small_specs();
  auto ds = gen_dataset(2, default_blend_list(), specs, 20.0, 32, 1, 1);
  const std::string full = (dir / "full.sds").string();
  write_sds1(full, DatasetHeader{1, 32, 2, 1, 20.0}, ds);
  std::string bytes = slurp(full);
  const std::string cut = (dir / "cut.sds").string();
  {
    std::ofstream os(cut, std::ios::binary);
    os.write(bytes.data(), std::streamsize(bytes.size() / 2));
  }
  CHECK_THROWS_AS(read_sds1(cut), DataError);
}

TEST_CASE("sample CSV export writes one row per index") {
  GenSpecs specs = small_specs();
  DecomposedSample smp = gen_sample(Blend{0.6, 0.2, 0.2}, specs, 20.0, 48, 5);
  auto dir = tmp_dir();
  const std::string path = (dir / "sample.csv").string();
  write_sample_csv(path, smp);
  std::ifstream is(path);
  std::string header;
  std::getline(is, header);
  CHECK(header == "f,c,s,o,n");
  int rows = 0;
  double f0 = 0, c0 = 0, s0 = 0, o0 = 0, n0 = 0;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (rows == 0) CHECK(std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf", &f0, &c0, &s0, &o0, &n0) == 5);
    ++rows;
  }
  CHECK(rows == 48);
  CHECK(f0 == doctest::Approx(double(smp.f(0))).epsilon(1e-6));
  CHECK(n0 == doctest::Approx(double(smp.n(0))).epsilon(1e-6));
}
