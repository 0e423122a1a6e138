#include "tsd/dataset_io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "tsd/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "SDS1 I/O writes raw little-endian scalars");

namespace tsd {

namespace {

constexpr char kMagic[4] = {'S', 'D', 'S', '1'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

void put_signal(std::ostream& os, const Eigen::VectorXf& x) {
  os.write(reinterpret_cast<const char*>(x.data()),
           static_cast<std::streamsize>(sizeof(float) * std::size_t(x.size())));
}

Eigen::VectorXf get_signal(std::istream& is, int m) {
  Eigen::VectorXf x(m);
  is.read(reinterpret_cast<char*>(x.data()),
          static_cast<std::streamsize>(sizeof(float) * std::size_t(m)));
  return x;
}

}  // namespace

void write_sds1(const std::string& path, const DatasetHeader& header,
                const std::vector<DecomposedSample>& samples) {
  if (header.count != samples.size())
    throw DataError("write_sds1: header count does not match sample count");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("write_sds1: cannot open '" + path + "' for writing");
  os.write(kMagic, 4);
  put<std::uint32_t>(os, header.version);
  put<std::uint32_t>(os, header.m);
  put<std::uint64_t>(os, header.count);
  put<std::uint64_t>(os, header.master_seed);
  put<double>(os, header.snr_db);
  for (const DecomposedSample& s : samples) {
    if (s.f.size() != int(header.m))
      throw DataError("write_sds1: sample length does not match header m");
    put<float>(os, s.blend_c);
    put<float>(os, s.blend_s);
    put<float>(os, s.blend_o);
    put<std::uint64_t>(os, s.seed);
    put_signal(os, s.f);
    put_signal(os, s.c);
    put_signal(os, s.s);
    put_signal(os, s.o);
    put_signal(os, s.n);
  }
  if (!os) throw DataError("write_sds1: write to '" + path + "' failed");
}

Dataset read_sds1(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("read_sds1: cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("read_sds1: '" + path + "' is not an SDS1 file");
  Dataset ds;
  ds.header.version = get<std::uint32_t>(is);
  if (ds.header.version != 1)
    throw DataError("read_sds1: unsupported version " + std::to_string(ds.header.version));
  ds.header.m = get<std::uint32_t>(is);
  ds.header.count = get<std::uint64_t>(is);
  ds.header.master_seed = get<std::uint64_t>(is);
  ds.header.snr_db = get<double>(is);
  const int m = static_cast<int>(ds.header.m);
  ds.samples.resize(ds.header.count);
  for (DecomposedSample& s : ds.samples) {
    s.blend_c = get<float>(is);
    s.blend_s = get<float>(is);
    s.blend_o = get<float>(is);
    s.seed = get<std::uint64_t>(is);
    s.f = get_signal(is, m);
    s.c = get_signal(is, m);
    s.s = get_signal(is, m);
    s.o = get_signal(is, m);
    s.n = get_signal(is, m);
    s.snr_db = ds.header.snr_db;
    if (!is) throw DataError("read_sds1: '" + path + "' is truncated");
  }
  return ds;
}

void write_sample_csv(const std::string& path, const DecomposedSample& sample) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("write_sample_csv: cannot open '" + path + "'");
  os << "f,c,s,o,n\n";
  char line[192];
  for (int i = 0; i < sample.f.size(); ++i) {
    std::snprintf(line, sizeof(line), "%.9g,%.9g,%.9g,%.9g,%.9g\n", double(sample.f(i)),
                  double(sample.c(i)), double(sample.s(i)), double(sample.o(i)),
                  double(sample.n(i)));
    os << line;
  }
  if (!os) throw DataError("write_sample_csv: write to '" + path + "' failed");
}

}  // namespace tsd
