#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tsd/tensor.hpp"

namespace tsd {

// How a length-M signal becomes L = M/S tokens of width D.
enum class Adapter { no_chunks, sum, cat, conv };

inline std::string adapter_name(Adapter a) {
  switch (a) {
    case Adapter::no_chunks: return "no_chunks";
    case Adapter::sum: return "sum";
    case Adapter::cat: return "cat";
    case Adapter::conv: return "conv";
  }
  return "?";
}

inline Adapter adapter_from_name(const std::string& name) {
  if (name == "no_chunks") return Adapter::no_chunks;
  if (name == "sum") return Adapter::sum;
  if (name == "cat") return Adapter::cat;
  if (name == "conv") return Adapter::conv;
  throw ConfigError("unknown adapter '" + name + "' (no_chunks|sum|cat|conv)");
}

struct ModelConfig {
  int input_len = 512;   // samples per signal
  int token_dim = 512;   // token width
  int num_layers = 4;    // encoder depth
  int num_heads = 8;
  int chunk_size = 1;    // samples per token
  Adapter adapter = Adapter::no_chunks;
  double dropout_p = 0.1;
  bool zero_init_head = false;
  int output_kernel = 3;
  // attention logits are scaled by 1/sqrt(token_dim); this switches to the
  // conventional 1/sqrt(head_dim)
  bool scale_by_head_dim = false;

  int seq_len() const { return input_len / chunk_size; }
  int head_dim() const { return token_dim / num_heads; }
  int ff_dim() const { return 4 * token_dim; }

  void validate() const {
    if (input_len < 2 || token_dim < 2 || num_layers < 1 || num_heads < 1 || chunk_size < 1)
      throw ConfigError("model config: dimensions must be positive");
    if (input_len % chunk_size != 0)
      throw ConfigError("model config: chunk size " + std::to_string(chunk_size) +
                        " must divide input length " + std::to_string(input_len));
    if (token_dim % num_heads != 0)
      throw ConfigError("model config: heads " + std::to_string(num_heads) +
                        " must divide token dim " + std::to_string(token_dim));
    if (token_dim % 2 != 0)
      throw ConfigError("model config: token dim must be even for the positional encoding");
    if (adapter == Adapter::cat && token_dim % chunk_size != 0)
      throw ConfigError("model config: cat adapter needs chunk size " +
                        std::to_string(chunk_size) + " to divide token dim " +
                        std::to_string(token_dim));
    if (adapter == Adapter::no_chunks && chunk_size != 1)
      throw ConfigError("model config: no_chunks adapter implies chunk size 1");
    if (output_kernel < 1 || output_kernel % 2 == 0)
      throw ConfigError("model config: output kernel must be odd");
    if (dropout_p < 0.0 || dropout_p >= 1.0)
      throw ConfigError("model config: dropout must lie in [0, 1)");
  }
};

inline constexpr double kLayerNormEps = 1e-5;

// Fixed order of the four predicted components everywhere: c, s, o, n.
inline constexpr std::array<const char*, 4> kComponentNames = {"c", "s", "o", "n"};

// Fixed parameter layout for a config: (name, shape) in storage order.
inline std::vector<std::pair<std::string, Shape>> param_layout(const ModelConfig& cfg) {
  cfg.validate();
  std::vector<std::pair<std::string, Shape>> out;
  const int d = cfg.token_dim;
  const int adapter_out = cfg.adapter == Adapter::cat ? d / cfg.chunk_size : d;
  const int adapter_in = cfg.adapter == Adapter::conv ? cfg.chunk_size : 1;
  out.emplace_back("adapter.conv_w", Shape{adapter_out, adapter_in, 3});
  out.emplace_back("adapter.conv_b", Shape{adapter_out});
  for (int i = 0; i < cfg.num_layers; ++i) {
    const std::string p = "layer" + std::to_string(i) + ".";
    out.emplace_back(p + "query_w", Shape{d, d});
    out.emplace_back(p + "key_w", Shape{d, d});
    out.emplace_back(p + "value_w", Shape{d, d});
    out.emplace_back(p + "out_w", Shape{d, d});
    out.emplace_back(p + "ff1_w", Shape{cfg.ff_dim(), d});
    out.emplace_back(p + "ff1_b", Shape{cfg.ff_dim()});
    out.emplace_back(p + "ff2_w", Shape{d, cfg.ff_dim()});
    out.emplace_back(p + "ff2_b", Shape{d});
    out.emplace_back(p + "norm1_gain", Shape{d});
    out.emplace_back(p + "norm1_bias", Shape{d});
    out.emplace_back(p + "norm2_gain", Shape{d});
    out.emplace_back(p + "norm2_bias", Shape{d});
  }
  out.emplace_back("head.conv_w", Shape{cfg.input_len, cfg.seq_len(), cfg.output_kernel});
  out.emplace_back("head.conv_b", Shape{cfg.input_len});
  out.emplace_back("head.linear_w", Shape{d, 4});
  out.emplace_back("head.linear_b", Shape{4});
  return out;
}

inline std::int64_t param_count(const ModelConfig& cfg) {
  std::int64_t n = 0;
  for (const auto& [name, shape] : param_layout(cfg)) n += numel(shape);
  return n;
}

// Named learnable weights, in param_layout order, plus role indices so the
// forward pass does not search by name.
template <typename S>
struct ModelParams {
  ModelConfig cfg;
  std::vector<std::string> names;
  std::vector<Shape> shapes;
  std::vector<VecX<S>> values;

  int adapter_w = -1, adapter_b = -1;
  struct LayerIdx {
    int query_w, key_w, value_w, out_w;
    int ff1_w, ff1_b, ff2_w, ff2_b;
    int norm1_gain, norm1_bias, norm2_gain, norm2_bias;
  };
  std::vector<LayerIdx> layers;
  int head_conv_w = -1, head_conv_b = -1, head_linear_w = -1, head_linear_b = -1;

  std::size_t size() const { return values.size(); }

  std::int64_t total_size() const {
    std::int64_t n = 0;
    for (const auto& v : values) n += v.size();
    return n;
  }

  int index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return static_cast<int>(i);
    throw UsageError("no parameter named '" + name + "'");
  }

  template <typename T>
  ModelParams<T> cast() const {
    ModelParams<T> out;
    out.cfg = cfg;
    out.names = names;
    out.shapes = shapes;
    out.values.reserve(values.size());
    for (const auto& v : values) out.values.push_back(v.template cast<T>());
    out.wire_indices();
    return out;
  }

  // rebuilds the role indices from the names (layout order is fixed)
  void wire_indices() {
    adapter_w = index_of("adapter.conv_w");
    adapter_b = index_of("adapter.conv_b");
    layers.clear();
    for (int i = 0; i < cfg.num_layers; ++i) {
      const std::string p = "layer" + std::to_string(i) + ".";
      LayerIdx li{index_of(p + "query_w"),   index_of(p + "key_w"),
                  index_of(p + "value_w"),   index_of(p + "out_w"),
                  index_of(p + "ff1_w"),     index_of(p + "ff1_b"),
                  index_of(p + "ff2_w"),     index_of(p + "ff2_b"),
                  index_of(p + "norm1_gain"), index_of(p + "norm1_bias"),
                  index_of(p + "norm2_gain"), index_of(p + "norm2_bias")};
      layers.push_back(li);
    }
    head_conv_w = index_of("head.conv_w");
    head_conv_b = index_of("head.conv_b");
    head_linear_w = index_of("head.linear_w");
    head_linear_b = index_of("head.linear_b");
  }
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights, zero biases, unit
// layer-norm gains. The final shared linear is zeroed when zero_init_head is
// set, so the untrained network emits four exactly-zero components.
template <typename S>
ModelParams<S> init_params(const ModelConfig& cfg, Rng& rng) {
  ModelParams<S> p;
  p.cfg = cfg;
  auto layout = param_layout(cfg);
  auto fan_in_of = [&](const std::string& name, const Shape& shape) -> std::int64_t {
    if (name.ends_with("conv_w")) return std::int64_t(shape[1]) * shape[2];
    if (name.ends_with("ff1_w") || name.ends_with("ff2_w")) return shape[1];  // used as x * W^T
    return shape[0];  // square attention projections and the head linear: x * W
  };
  for (auto& [name, shape] : layout) {
    VecX<S> v = VecX<S>::Zero(numel(shape));
    const bool is_weight = name.ends_with("_w");
    const bool is_gain = name.ends_with("gain");
    const bool zero_head =
        cfg.zero_init_head && (name == "head.linear_w" || name == "head.linear_b");
    if (is_gain) {
      v.setOnes();
    } else if (is_weight && !zero_head) {
      const double bound = 1.0 / std::sqrt(double(fan_in_of(name, shape)));
      for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = S(rng.uniform(-bound, bound));
    }
    p.names.push_back(name);
    p.shapes.push_back(shape);
    p.values.push_back(std::move(v));
  }
  p.wire_indices();
  return p;
}

// --------------------------------------------------------------------------
// forward pass
// --------------------------------------------------------------------------

// Parameters entered as leaves on a tape, same order as ModelParams.
template <typename S>
struct BoundParams {
  std::vector<Tensor<S>> all;
  Tensor<S> adapter_w, adapter_b;
  struct Layer {
    Tensor<S> query_w, key_w, value_w, out_w;
    Tensor<S> ff1_w, ff1_b, ff2_w, ff2_b;
    Tensor<S> norm1_gain, norm1_bias, norm2_gain, norm2_bias;
  };
  std::vector<Layer> layers;
  Tensor<S> head_conv_w, head_conv_b, head_linear_w, head_linear_b;
};

template <typename S>
BoundParams<S> bind_params(Tape<S>& tape, const ModelParams<S>& params, bool with_grads) {
  BoundParams<S> b;
  b.all.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    b.all.push_back(tape.leaf(params.values[i], params.shapes[i], with_grads));
  b.adapter_w = b.all[std::size_t(params.adapter_w)];
  b.adapter_b = b.all[std::size_t(params.adapter_b)];
  for (const auto& li : params.layers) {
    typename BoundParams<S>::Layer l{
        b.all[std::size_t(li.query_w)],    b.all[std::size_t(li.key_w)],
        b.all[std::size_t(li.value_w)],    b.all[std::size_t(li.out_w)],
        b.all[std::size_t(li.ff1_w)],      b.all[std::size_t(li.ff1_b)],
        b.all[std::size_t(li.ff2_w)],      b.all[std::size_t(li.ff2_b)],
        b.all[std::size_t(li.norm1_gain)], b.all[std::size_t(li.norm1_bias)],
        b.all[std::size_t(li.norm2_gain)], b.all[std::size_t(li.norm2_bias)]};
    b.layers.push_back(l);
  }
  b.head_conv_w = b.all[std::size_t(params.head_conv_w)];
  b.head_conv_b = b.all[std::size_t(params.head_conv_b)];
  b.head_linear_w = b.all[std::size_t(params.head_linear_w)];
  b.head_linear_b = b.all[std::size_t(params.head_linear_b)];
  return b;
}

// Sinusoidal positional encodings: row pos holds
// sin(pos / 10000^(2i/D)) at even columns, cos at the following odd column.
template <typename S>
MatX<S> positional_encoding(int seq_len, int dim) {
  MatX<S> pe(seq_len, dim);
  for (int pos = 0; pos < seq_len; ++pos) {
    for (int i = 0; i < dim / 2; ++i) {
      const double freq = std::pow(10000.0, -2.0 * double(i) / double(dim));
      pe(pos, 2 * i) = S(std::sin(double(pos) * freq));
      pe(pos, 2 * i + 1) = S(std::cos(double(pos) * freq));
    }
  }
  return pe;
}

// Signal -> [L x D] tokens, before positional encodings.
template <typename S>
Tensor<S> adapter_tokens(Tape<S>& tape, Tensor<S> input, const ModelConfig& cfg,
                         const BoundParams<S>& bp) {
  const int m = cfg.input_len;
  const int chunk = cfg.chunk_size;
  switch (cfg.adapter) {
    case Adapter::no_chunks: {
      auto embedded = conv1d(reshape(input, {1, m}), bp.adapter_w, bp.adapter_b);
      return transpose(embedded);
    }
    case Adapter::sum: {
      auto embedded = conv1d(reshape(input, {1, m}), bp.adapter_w, bp.adapter_b);
      return sum_over_chunk(transpose(embedded), chunk);
    }
    case Adapter::cat: {
      auto embedded = conv1d(reshape(input, {1, m}), bp.adapter_w, bp.adapter_b);
      // row-major reshape concatenates the chunk of per-sample embeddings
      return reshape(transpose(embedded), {cfg.seq_len(), cfg.token_dim});
    }
    case Adapter::conv: {
      auto channels = transpose(reshape(input, {cfg.seq_len(), chunk}));
      auto embedded = conv1d(channels, bp.adapter_w, bp.adapter_b);
      return transpose(embedded);
    }
  }
  throw ConfigError("unreachable adapter");
}

// Tokens with positional encodings added and input dropout applied.
template <typename S>
Tensor<S> input_adapter(Tape<S>& tape, Tensor<S> input, const ModelConfig& cfg,
                        const BoundParams<S>& bp, Rng* rng, bool training) {
  Tensor<S> tokens = adapter_tokens(tape, input, cfg, bp);
  Tensor<S> pe = tape.constant(positional_encoding<S>(cfg.seq_len(), cfg.token_dim));
  return dropout(add(tokens, pe), cfg.dropout_p, training, rng);
}

// One post-norm encoder layer:
//   y1 = LN(y + Drop(MHSA(y))); out = LN(y1 + Drop(FF(y1)))
// with multi-head self-attention over fused [D x D] projections sliced per
// head, and a ReLU feed-forward of hidden width 4D.
template <typename S>
Tensor<S> encoder_layer(Tape<S>& tape, Tensor<S> tokens, const ModelConfig& cfg,
                        const typename BoundParams<S>::Layer& lp, Rng* rng, bool training,
                        std::vector<MatX<S>>* attention = nullptr) {
  const int dk = cfg.head_dim();
  const S inv_scale =
      S(1) / S(std::sqrt(double(cfg.scale_by_head_dim ? cfg.head_dim() : cfg.token_dim)));
  auto queries = matmul(tokens, lp.query_w);
  auto keys = matmul(tokens, lp.key_w);
  auto values = matmul(tokens, lp.value_w);
  std::vector<Tensor<S>> heads;
  heads.reserve(std::size_t(cfg.num_heads));
  for (int h = 0; h < cfg.num_heads; ++h) {
    auto qh = slice_cols(queries, h * dk, dk);
    auto kh = slice_cols(keys, h * dk, dk);
    auto vh = slice_cols(values, h * dk, dk);
    auto probs = softmax_rows(scale(matmul_t(qh, kh), inv_scale));
    if (attention) attention->emplace_back(probs.mat());
    heads.push_back(matmul(probs, vh));
  }
  auto mixed = matmul(concat_rows(heads), lp.out_w);
  auto after_attn = layer_norm(add(tokens, dropout(mixed, cfg.dropout_p, training, rng)),
                               lp.norm1_gain, lp.norm1_bias, S(kLayerNormEps));
  auto hidden =
      dropout(relu(add_rowvec(matmul_t(after_attn, lp.ff1_w), lp.ff1_b)), cfg.dropout_p,
              training, rng);
  auto ff_out = add_rowvec(matmul_t(hidden, lp.ff2_w), lp.ff2_b);
  return layer_norm(add(after_attn, dropout(ff_out, cfg.dropout_p, training, rng)),
                    lp.norm2_gain, lp.norm2_bias, S(kLayerNormEps));
}

// [L x D] tokens -> four length-M signals, in component order c, s, o, n.
// The token matrix is treated as D samples of L channels, convolved up to M
// channels, then a shared D->4 affine map runs per output sample.
template <typename S>
std::array<Tensor<S>, 4> output_head(Tape<S>& tape, Tensor<S> tokens, const ModelConfig& cfg,
                                     const BoundParams<S>& bp) {
  auto mixed = conv1d(tokens, bp.head_conv_w, bp.head_conv_b);          // [M x D]
  auto comps = add_rowvec(matmul(mixed, bp.head_linear_w), bp.head_linear_b);  // [M x 4]
  std::array<Tensor<S>, 4> out;
  for (int i = 0; i < 4; ++i) out[std::size_t(i)] = reshape(slice_cols(comps, i, 1), {cfg.input_len});
  return out;
}

template <typename S>
struct ForwardOptions {
  bool training = false;
  bool with_grads = false;
  Rng* rng = nullptr;
  std::vector<MatX<S>>* attention = nullptr;
};

template <typename S>
std::array<Tensor<S>, 4> tsd_forward(Tape<S>& tape, const VecX<S>& signal,
                                     const ModelParams<S>& params, const ForwardOptions<S>& opt = {},
                                     BoundParams<S>* bound_out = nullptr) {
  const ModelConfig& cfg = params.cfg;
  cfg.validate();
  if (signal.size() != cfg.input_len)
    throw DataError("input length " + std::to_string(signal.size()) + " does not match model (" +
                    std::to_string(cfg.input_len) + ")");
  BoundParams<S> bound = bind_params(tape, params, opt.with_grads);
  Tensor<S> input = tape.leaf(signal, {cfg.input_len}, false);
  Tensor<S> tokens = input_adapter(tape, input, cfg, bound, opt.rng, opt.training);
  for (int i = 0; i < cfg.num_layers; ++i)
    tokens = encoder_layer(tape, tokens, cfg, bound.layers[std::size_t(i)], opt.rng, opt.training,
                           opt.attention);
  auto comps = output_head(tape, tokens, cfg, bound);
  if (bound_out) *bound_out = std::move(bound);
  return comps;
}

// Eval-mode forward returning plain vectors.
template <typename S>
std::array<VecX<S>, 4> predict(const ModelParams<S>& params, const VecX<S>& signal) {
  Tape<S> tape;
  auto comps = tsd_forward(tape, signal, params);
  std::array<VecX<S>, 4> out;
  for (int i = 0; i < 4; ++i) out[std::size_t(i)] = comps[std::size_t(i)].flat();
  return out;
}

}  // namespace tsd
