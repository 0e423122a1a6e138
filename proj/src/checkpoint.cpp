#include "tsd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "tsd/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "TSDC I/O writes raw little-endian scalars");

namespace tsd {

namespace {

constexpr char kMagic[4] = {'T', 'S', 'D', 'C'};
constexpr const char* kComponentNote = "components=c,s,o,n";

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

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), std::streamsize(s.size()));
}

std::string get_string(std::istream& is) {
  const auto len = get<std::uint32_t>(is);
  if (len > (1u << 20)) throw DataError("checkpoint: implausible string length");
  std::string s(len, '\0');
  is.read(s.data(), std::streamsize(len));
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams<float>& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("save_checkpoint: cannot open '" + path + "' for writing");
  const ModelConfig& cfg = params.cfg;
  os.write(kMagic, 4);
  put<std::uint32_t>(os, 1);
  put<std::uint32_t>(os, std::uint32_t(cfg.input_len));
  put<std::uint32_t>(os, std::uint32_t(cfg.token_dim));
  put<std::uint32_t>(os, std::uint32_t(cfg.num_layers));
  put<std::uint32_t>(os, std::uint32_t(cfg.num_heads));
  put<std::uint32_t>(os, std::uint32_t(cfg.chunk_size));
  put<std::uint8_t>(os, std::uint8_t(cfg.adapter));
  put<double>(os, cfg.dropout_p);
  put<std::uint8_t>(os, cfg.zero_init_head ? 1 : 0);
  put<std::uint32_t>(os, std::uint32_t(cfg.output_kernel));
  put<std::uint8_t>(os, cfg.scale_by_head_dim ? 1 : 0);
  put_string(os, kComponentNote);
  put<std::uint64_t>(os, std::uint64_t(params.total_size()));
  put<std::uint32_t>(os, std::uint32_t(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    put_string(os, params.names[i]);
    const Shape& shape = params.shapes[i];
    put<std::uint8_t>(os, std::uint8_t(shape.size()));
    for (int d : shape) put<std::uint32_t>(os, std::uint32_t(d));
    os.write(reinterpret_cast<const char*>(params.values[i].data()),
             std::streamsize(sizeof(float) * std::size_t(params.values[i].size())));
  }
  if (!os) throw DataError("save_checkpoint: write to '" + path + "' failed");
}

ModelParams<float> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("load_checkpoint: cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("load_checkpoint: '" + path + "' is not a TSDC checkpoint");
  const auto version = get<std::uint32_t>(is);
  if (version != 1)
    throw DataError("load_checkpoint: unsupported version " + std::to_string(version));

  ModelConfig cfg;
  cfg.input_len = int(get<std::uint32_t>(is));
  cfg.token_dim = int(get<std::uint32_t>(is));
  cfg.num_layers = int(get<std::uint32_t>(is));
  cfg.num_heads = int(get<std::uint32_t>(is));
  cfg.chunk_size = int(get<std::uint32_t>(is));
  cfg.adapter = Adapter(get<std::uint8_t>(is));
  cfg.dropout_p = get<double>(is);
  cfg.zero_init_head = get<std::uint8_t>(is) != 0;
  cfg.output_kernel = int(get<std::uint32_t>(is));
  cfg.scale_by_head_dim = get<std::uint8_t>(is) != 0;
  get_string(is);  // component-order note

  const auto recorded_count = get<std::uint64_t>(is);
  if (recorded_count != std::uint64_t(param_count(cfg)))
    throw DataError("load_checkpoint: recorded parameter count " +
                    std::to_string(recorded_count) + " does not match the config (" +
                    std::to_string(param_count(cfg)) + ")");

  const auto tensors = get<std::uint32_t>(is);
  const auto layout = param_layout(cfg);
  if (tensors != layout.size())
    throw DataError("load_checkpoint: tensor count " + std::to_string(tensors) +
                    " does not match the config layout (" + std::to_string(layout.size()) + ")");

  ModelParams<float> params;
  params.cfg = cfg;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const std::string name = get_string(is);
    if (name != layout[i].first)
      throw DataError("load_checkpoint: tensor '" + name + "' where '" + layout[i].first +
                      "' was expected");
    const int rank = int(get<std::uint8_t>(is));
    Shape shape(static_cast<std::size_t>(rank), 0);
    for (int r = 0; r < rank; ++r) shape[std::size_t(r)] = int(get<std::uint32_t>(is));
    if (shape != layout[i].second)
      throw DataError("load_checkpoint: tensor '" + name + "' has shape " + shape_str(shape) +
                      ", expected " + shape_str(layout[i].second));
    VecX<float> v(numel(shape));
    is.read(reinterpret_cast<char*>(v.data()),
            std::streamsize(sizeof(float) * std::size_t(v.size())));
    if (!is) throw DataError("load_checkpoint: '" + path + "' is truncated");
    params.names.push_back(name);
    params.shapes.push_back(shape);
    params.values.push_back(std::move(v));
  }
  params.wire_indices();
  if (params.total_size() != std::int64_t(recorded_count))
    throw DataError("load_checkpoint: parameter data does not match the recorded count");
  return params;
}

}  // namespace tsd
