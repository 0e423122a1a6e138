#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "tsd/errors.hpp"
#include "tsd/rng.hpp"

namespace tsd {

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using MatMap = Eigen::Map<MatX<S>>;
template <typename S>
using ConstMatMap = Eigen::Map<const MatX<S>>;

using Shape = std::vector<int>;

inline std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename S>
class Tape;

// Handle to a node on a tape. Cheap to copy; the tape owns the storage.
template <typename S>
struct Tensor {
  Tape<S>* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  int rows() const { return shape()[0]; }
  int cols() const { return shape()[1]; }
  std::int64_t size() const { return numel(shape()); }

  const VecX<S>& flat() const;
  ConstMatMap<S> mat() const;  // rank-2 view
  S scalar() const;

  // Leaf gradient after backward().
  const VecX<S>& grad() const;
  bool has_grad() const;
};

// Records every executed op so one reverse sweep can accumulate gradients on
// the requires-grad leaves. Node indices form a topological order by
// construction; the sweep walks them once, in reverse, freeing interior
// buffers as soon as their consumers have run. A tape serves one
// forward/backward pair; build a fresh one per step.
template <typename S>
class Tape {
  static_assert(std::is_floating_point_v<S>);

 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor<S> leaf(const VecX<S>& data, Shape shape, bool requires_grad) {
    if (numel(shape) != data.size())
      throw ShapeError("leaf: data size " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    return push(std::move(shape), data, requires_grad, true);
  }

  Tensor<S> leaf(const MatX<S>& data, bool requires_grad) {
    VecX<S> flat = Eigen::Map<const VecX<S>>(data.data(), data.size());
    return push({static_cast<int>(data.rows()), static_cast<int>(data.cols())}, std::move(flat),
                requires_grad, true);
  }

  Tensor<S> constant(const VecX<S>& data, Shape shape) {
    return leaf(data, std::move(shape), false);
  }
  Tensor<S> constant(const MatX<S>& data) { return leaf(data, false); }

  // Registers an op's output node; requires-grad iff any input requires it.
  Tensor<S> node(Shape shape, VecX<S> value, std::initializer_list<Tensor<S>> inputs) {
    bool needs = false;
    for (const Tensor<S>& in : inputs) {
      if (in.tape != this) throw UsageError("op inputs belong to a different tape");
      needs = needs || nodes_[in.id].requires_grad;
    }
    return push(std::move(shape), std::move(value), needs, false);
  }

  Tensor<S> node(Shape shape, VecX<S> value, const std::vector<Tensor<S>>& inputs) {
    bool needs = false;
    for (const Tensor<S>& in : inputs) {
      if (in.tape != this) throw UsageError("op inputs belong to a different tape");
      needs = needs || nodes_[in.id].requires_grad;
    }
    return push(std::move(shape), std::move(value), needs, false);
  }

  // Attaches the reverse-pass closure for `out`; dropped when the output
  // does not need gradients.
  template <typename F>
  void set_back(Tensor<S> out, F&& back) {
    if (nodes_[out.id].requires_grad) nodes_[out.id].back = std::forward<F>(back);
  }

  // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. Leaf values
  // and gradients stay readable; interior storage is released and the tape
  // refuses further ops.
  void backward(Tensor<S> loss) {
    if (loss.tape != this) throw UsageError("backward: loss lives on a different tape");
    if (consumed_) throw UsageError("backward: tape already consumed");
    if (numel(nodes_[loss.id].shape) != 1)
      throw UsageError("backward: loss must be scalar, got " + shape_str(nodes_[loss.id].shape));
    if (!nodes_[loss.id].requires_grad)
      throw UsageError("backward: loss does not depend on any requires-grad leaf");
    consumed_ = true;
    nodes_[loss.id].grad = VecX<S>::Ones(1);
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.grad.size() > 0 && n.back) {
        n.back(*this);
        ++replayed_;
      }
      if (!n.is_leaf) {
        n.value.resize(0);
        n.grad.resize(0);
        n.back = nullptr;
      }
    }
  }

  bool consumed() const { return consumed_; }
  int size() const { return static_cast<int>(nodes_.size()); }
  int replayed() const { return replayed_; }

  const Shape& shape(int id) const { return nodes_[id].shape; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  const VecX<S>& val_vec(int id) const { return nodes_[id].value; }
  ConstMatMap<S> val_mat(int id) const {
    const Node& n = nodes_[id];
    return ConstMatMap<S>(n.value.data(), n.shape[0], n.shape[1]);
  }

  VecX<S>& grad_vec(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = VecX<S>::Zero(numel(n.shape));
    return n.grad;
  }
  MatMap<S> grad_mat(int id) {
    VecX<S>& g = grad_vec(id);
    const Shape& s = nodes_[id].shape;
    return MatMap<S>(g.data(), s[0], s[1]);
  }
  bool grad_present(int id) const { return nodes_[id].grad.size() > 0; }

 private:
  struct Node {
    Shape shape;
    VecX<S> value;
    VecX<S> grad;
    std::function<void(Tape&)> back;
    bool requires_grad = false;
    bool is_leaf = false;
  };

  Tensor<S> push(Shape shape, VecX<S> value, bool requires_grad, bool is_leaf) {
    if (consumed_) throw UsageError("tape already consumed; create a new tape");
    Node n;
    n.shape = std::move(shape);
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.is_leaf = is_leaf;
    nodes_.push_back(std::move(n));
    return Tensor<S>{this, static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
  bool consumed_ = false;
  int replayed_ = 0;
};

template <typename S>
const Shape& Tensor<S>::shape() const {
  return tape->shape(id);
}
template <typename S>
const VecX<S>& Tensor<S>::flat() const {
  return tape->val_vec(id);
}
template <typename S>
ConstMatMap<S> Tensor<S>::mat() const {
  return tape->val_mat(id);
}
template <typename S>
S Tensor<S>::scalar() const {
  return tape->val_vec(id)(0);
}
template <typename S>
const VecX<S>& Tensor<S>::grad() const {
  return tape->grad_vec(id);
}
template <typename S>
bool Tensor<S>::has_grad() const {
  return tape->grad_present(id);
}

namespace detail {

template <typename S>
void require_rank(const Tensor<S>& t, int rank, const char* op) {
  if (t.rank() != rank)
    throw ShapeError(std::string(op) + ": expected rank-" + std::to_string(rank) +
                     " tensor, got " + shape_str(t.shape()));
}

template <typename S>
VecX<S> to_flat(const MatX<S>& m) {
  return VecX<S>(Eigen::Map<const VecX<S>>(m.data(), m.size()));
}

}  // namespace detail

// --------------------------------------------------------------------------
// elementwise and structural ops
// --------------------------------------------------------------------------

template <typename S>
Tensor<S> add(Tensor<S> a, Tensor<S> b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: shapes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  VecX<S> v = a.flat() + b.flat();
  Tensor<S> out = a.tape->node(a.shape(), std::move(v), {a, b});
  a.tape->set_back(out, [ia = a.id, ib = b.id, io = out.id](Tape<S>& t) {
    const VecX<S>& g = t.grad_vec(io);
    if (t.requires_grad(ia)) t.grad_vec(ia) += g;
    if (t.requires_grad(ib)) t.grad_vec(ib) += g;
  });
  return out;
}

template <typename S>
Tensor<S> sub(Tensor<S> a, Tensor<S> b) {
  if (a.shape() != b.shape())
    throw ShapeError("sub: shapes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  VecX<S> v = a.flat() - b.flat();
  Tensor<S> out = a.tape->node(a.shape(), std::move(v), {a, b});
  a.tape->set_back(out, [ia = a.id, ib = b.id, io = out.id](Tape<S>& t) {
    const VecX<S>& g = t.grad_vec(io);
    if (t.requires_grad(ia)) t.grad_vec(ia) += g;
    if (t.requires_grad(ib)) t.grad_vec(ib) -= g;
  });
  return out;
}

template <typename S>
Tensor<S> scale(Tensor<S> x, S c) {
  VecX<S> v = x.flat() * c;
  Tensor<S> out = x.tape->node(x.shape(), std::move(v), {x});
  x.tape->set_back(out, [ix = x.id, io = out.id, c](Tape<S>& t) {
    t.grad_vec(ix) += c * t.grad_vec(io);
  });
  return out;
}

template <typename S>
Tensor<S> relu(Tensor<S> x) {
  VecX<S> v = x.flat().cwiseMax(S(0));
  Tensor<S> out = x.tape->node(x.shape(), std::move(v), {x});
  x.tape->set_back(out, [ix = x.id, io = out.id](Tape<S>& t) {
    const VecX<S>& xv = t.val_vec(ix);
    const VecX<S>& g = t.grad_vec(io);
    t.grad_vec(ix).array() += g.array() * (xv.array() > S(0)).template cast<S>();
  });
  return out;
}

template <typename S>
Tensor<S> reshape(Tensor<S> x, Shape shape) {
  if (numel(shape) != x.size())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  VecX<S> v = x.flat();
  Tensor<S> out = x.tape->node(std::move(shape), std::move(v), {x});
  x.tape->set_back(out, [ix = x.id, io = out.id](Tape<S>& t) {
    t.grad_vec(ix) += t.grad_vec(io);
  });
  return out;
}

template <typename S>
Tensor<S> transpose(Tensor<S> x) {
  detail::require_rank(x, 2, "transpose");
  MatX<S> v = x.mat().transpose();
  Tensor<S> out = x.tape->node({x.cols(), x.rows()}, detail::to_flat(v), {x});
  x.tape->set_back(out, [ix = x.id, io = out.id](Tape<S>& t) {
    t.grad_mat(ix) += t.grad_mat(io).transpose();
  });
  return out;
}

// Broadcast-add a length-n vector to every row of an [m x n] matrix.
template <typename S>
Tensor<S> add_rowvec(Tensor<S> x, Tensor<S> row) {
  detail::require_rank(x, 2, "add_rowvec");
  detail::require_rank(row, 1, "add_rowvec");
  if (x.cols() != row.shape()[0])
    throw ShapeError("add_rowvec: " + shape_str(x.shape()) + " vs " + shape_str(row.shape()));
  MatX<S> v = x.mat();
  v.rowwise() += row.flat().transpose();
  Tensor<S> out = x.tape->node(x.shape(), detail::to_flat(v), {x, row});
  x.tape->set_back(out, [ix = x.id, ir = row.id, io = out.id](Tape<S>& t) {
    MatMap<S> g = t.grad_mat(io);
    if (t.requires_grad(ix)) t.grad_vec(ix) += t.grad_vec(io);
    if (t.requires_grad(ir)) t.grad_vec(ir) += g.colwise().sum().transpose();
  });
  return out;
}

// Row-wise concatenation: output row i is the concatenation of row i of
// every part, in order.
template <typename S>
Tensor<S> concat_rows(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw UsageError("concat_rows: no inputs");
  Tape<S>& tape = *parts[0].tape;
  const int m = parts[0].rows();
  int total = 0;
  for (const Tensor<S>& p : parts) {
    detail::require_rank(p, 2, "concat_rows");
    if (p.rows() != m)
      throw ShapeError("concat_rows: row counts differ: " + shape_str(parts[0].shape()) + " vs " +
                       shape_str(p.shape()));
    total += p.cols();
  }
  MatX<S> v(m, total);
  int at = 0;
  for (const Tensor<S>& p : parts) {
    v.block(0, at, m, p.cols()) = p.mat();
    at += p.cols();
  }
  Tensor<S> out = tape.node({m, total}, detail::to_flat(v), parts);
  std::vector<std::pair<int, int>> in;  // (id, width)
  for (const Tensor<S>& p : parts) in.emplace_back(p.id, p.cols());
  tape.set_back(out, [in = std::move(in), io = out.id, m](Tape<S>& t) {
    MatMap<S> g = t.grad_mat(io);
    int at = 0;
    for (auto [id, w] : in) {
      if (t.requires_grad(id)) t.grad_mat(id) += g.block(0, at, m, w);
      at += w;
    }
  });
  return out;
}

template <typename S>
Tensor<S> slice_cols(Tensor<S> x, int first, int width) {
  detail::require_rank(x, 2, "slice_cols");
  if (first < 0 || width <= 0 || first + width > x.cols())
    throw ShapeError("slice_cols: columns [" + std::to_string(first) + ", " +
                     std::to_string(first + width) + ") out of range for " + shape_str(x.shape()));
  MatX<S> v = x.mat().block(0, first, x.rows(), width);
  Tensor<S> out = x.tape->node({x.rows(), width}, detail::to_flat(v), {x});
  x.tape->set_back(out, [ix = x.id, io = out.id, first, width](Tape<S>& t) {
    MatMap<S> gx = t.grad_mat(ix);
    gx.block(0, first, gx.rows(), width) += t.grad_mat(io);
  });
  return out;
}

// Sums groups of `chunk` consecutive rows: [m x n] -> [m/chunk x n].
template <typename S>
Tensor<S> sum_over_chunk(Tensor<S> x, int chunk) {
  detail::require_rank(x, 2, "sum_over_chunk");
  if (chunk < 1 || x.rows() % chunk != 0)
    throw ConfigError("sum_over_chunk: chunk " + std::to_string(chunk) +
                      " does not divide rows of " + shape_str(x.shape()));
  const int groups = x.rows() / chunk;
  MatX<S> v = MatX<S>::Zero(groups, x.cols());
  ConstMatMap<S> xm = x.mat();
  for (int g = 0; g < groups; ++g)
    for (int i = 0; i < chunk; ++i) v.row(g) += xm.row(g * chunk + i);
  Tensor<S> out = x.tape->node({groups, x.cols()}, detail::to_flat(v), {x});
  x.tape->set_back(out, [ix = x.id, io = out.id, chunk](Tape<S>& t) {
    MatMap<S> gx = t.grad_mat(ix);
    MatMap<S> g = t.grad_mat(io);
    for (int r = 0; r < gx.rows(); ++r) gx.row(r) += g.row(r / chunk);
  });
  return out;
}

// --------------------------------------------------------------------------
// reductions
// --------------------------------------------------------------------------

template <typename S>
Tensor<S> sum_all(Tensor<S> x) {
  VecX<S> v(1);
  v(0) = x.flat().sum();
  Tensor<S> out = x.tape->node({1}, std::move(v), {x});
  x.tape->set_back(out, [ix = x.id, io = out.id](Tape<S>& t) {
    t.grad_vec(ix).array() += t.grad_vec(io)(0);
  });
  return out;
}

template <typename S>
Tensor<S> sum_squares(Tensor<S> x) {
  VecX<S> v(1);
  v(0) = x.flat().squaredNorm();
  Tensor<S> out = x.tape->node({1}, std::move(v), {x});
  x.tape->set_back(out, [ix = x.id, io = out.id](Tape<S>& t) {
    t.grad_vec(ix) += (S(2) * t.grad_vec(io)(0)) * t.val_vec(ix);
  });
  return out;
}

// --------------------------------------------------------------------------
// matrix products
// --------------------------------------------------------------------------

template <typename S>
Tensor<S> matmul(Tensor<S> a, Tensor<S> b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " * " +
                     shape_str(b.shape()));
  MatX<S> v = a.mat() * b.mat();
  Tensor<S> out = a.tape->node({a.rows(), b.cols()}, detail::to_flat(v), {a, b});
  a.tape->set_back(out, [ia = a.id, ib = b.id, io = out.id](Tape<S>& t) {
    MatMap<S> g = t.grad_mat(io);
    if (t.requires_grad(ia)) t.grad_mat(ia).noalias() += g * t.val_mat(ib).transpose();
    if (t.requires_grad(ib)) t.grad_mat(ib).noalias() += t.val_mat(ia).transpose() * g;
  });
  return out;
}

// a * b^T without materialising the transpose.
template <typename S>
Tensor<S> matmul_t(Tensor<S> a, Tensor<S> b) {
  detail::require_rank(a, 2, "matmul_t");
  detail::require_rank(b, 2, "matmul_t");
  if (a.cols() != b.cols())
    throw ShapeError("matmul_t: inner dimensions disagree: " + shape_str(a.shape()) + " * " +
                     shape_str(b.shape()) + "^T");
  MatX<S> v = a.mat() * b.mat().transpose();
  Tensor<S> out = a.tape->node({a.rows(), b.rows()}, detail::to_flat(v), {a, b});
  a.tape->set_back(out, [ia = a.id, ib = b.id, io = out.id](Tape<S>& t) {
    MatMap<S> g = t.grad_mat(io);
    if (t.requires_grad(ia)) t.grad_mat(ia).noalias() += g * t.val_mat(ib);
    if (t.requires_grad(ib)) t.grad_mat(ib).noalias() += g.transpose() * t.val_mat(ia);
  });
  return out;
}

// --------------------------------------------------------------------------
// row-wise softmax
// --------------------------------------------------------------------------

template <typename S>
Tensor<S> softmax_rows(Tensor<S> x) {
  detail::require_rank(x, 2, "softmax_rows");
  MatX<S> v = x.mat();
  for (int r = 0; r < v.rows(); ++r) {
    auto row = v.row(r);
    row = (row.array() - row.maxCoeff()).exp();
    row /= row.sum();
  }
  Tensor<S> out = x.tape->node(x.shape(), detail::to_flat(v), {x});
  x.tape->set_back(out, [ix = x.id, io = out.id](Tape<S>& t) {
    ConstMatMap<S> y = t.val_mat(io);
    MatMap<S> g = t.grad_mat(io);
    MatMap<S> gx = t.grad_mat(ix);
    for (int r = 0; r < y.rows(); ++r) {
      const S dot = g.row(r).dot(y.row(r));
      gx.row(r).array() += y.row(r).array() * (g.row(r).array() - dot);
    }
  });
  return out;
}

// --------------------------------------------------------------------------
// layer normalization over the last dimension of an [m x n] matrix
// --------------------------------------------------------------------------

template <typename S>
Tensor<S> layer_norm(Tensor<S> x, Tensor<S> gain, Tensor<S> bias, S eps) {
  detail::require_rank(x, 2, "layer_norm");
  detail::require_rank(gain, 1, "layer_norm");
  detail::require_rank(bias, 1, "layer_norm");
  const int n = x.cols();
  if (n < 2) throw ConfigError("layer_norm: needs at least 2 features per row");
  if (gain.shape()[0] != n || bias.shape()[0] != n)
    throw ShapeError("layer_norm: gain/bias length must match " + shape_str(x.shape()));
  ConstMatMap<S> xm = x.mat();
  const int m = x.rows();
  VecX<S> inv_std(m);
  MatX<S> v(m, n);
  for (int r = 0; r < m; ++r) {
    const S mu = xm.row(r).mean();
    const S var = (xm.row(r).array() - mu).square().sum() / S(n);
    inv_std(r) = S(1) / std::sqrt(var + eps);
    v.row(r) = ((xm.row(r).array() - mu) * inv_std(r)) * gain.flat().transpose().array() +
               bias.flat().transpose().array();
  }
  Tensor<S> out = x.tape->node(x.shape(), detail::to_flat(v), {x, gain, bias});
  x.tape->set_back(out, [ix = x.id, ig = gain.id, ibias = bias.id, io = out.id,
                         inv_std = std::move(inv_std)](Tape<S>& t) {
    ConstMatMap<S> xm = t.val_mat(ix);
    MatMap<S> g = t.grad_mat(io);
    const VecX<S>& gainv = t.val_vec(ig);
    const int m = static_cast<int>(xm.rows());
    const int n = static_cast<int>(xm.cols());
    for (int r = 0; r < m; ++r) {
      const S mu = xm.row(r).mean();
      Eigen::Array<S, 1, Eigen::Dynamic> xhat = (xm.row(r).array() - mu) * inv_std(r);
      Eigen::Array<S, 1, Eigen::Dynamic> gd = g.row(r).array() * gainv.transpose().array();
      if (t.requires_grad(ix)) {
        const S mean_gd = gd.sum() / S(n);
        const S mean_gdx = (gd * xhat).sum() / S(n);
        t.grad_mat(ix).row(r).array() += inv_std(r) * (gd - mean_gd - xhat * mean_gdx);
      }
      if (t.requires_grad(ig))
        t.grad_vec(ig).transpose().array() += g.row(r).array() * xhat;
      if (t.requires_grad(ibias)) t.grad_vec(ibias) += g.row(r).transpose();
    }
  });
  return out;
}

// --------------------------------------------------------------------------
// 1-D convolution (cross-correlation), zero padded to keep the length
// --------------------------------------------------------------------------
//
// x [c_in x len], kernel [c_out x c_in x k] (k odd), bias [c_out]
// -> [c_out x len].  Implemented as k shifted GEMMs.

namespace detail {

// kernel tap j as a [c_out x c_in] matrix (copy out of the strided layout)
template <typename S>
MatX<S> kernel_tap(const VecX<S>& kflat, int c_out, int c_in, int k, int j) {
  MatX<S> w(c_out, c_in);
  for (int co = 0; co < c_out; ++co)
    for (int ci = 0; ci < c_in; ++ci) w(co, ci) = kflat[(co * c_in + ci) * k + j];
  return w;
}

}  // namespace detail

template <typename S>
Tensor<S> conv1d(Tensor<S> x, Tensor<S> kernel, Tensor<S> bias) {
  detail::require_rank(x, 2, "conv1d");
  detail::require_rank(kernel, 3, "conv1d");
  detail::require_rank(bias, 1, "conv1d");
  const int c_in = x.rows();
  const int len = x.cols();
  const Shape& ks = kernel.shape();
  const int c_out = ks[0];
  const int k = ks[2];
  if (k % 2 == 0) throw ConfigError("conv1d: kernel size must be odd, got " + std::to_string(k));
  if (ks[1] != c_in)
    throw ShapeError("conv1d: kernel expects " + std::to_string(ks[1]) + " input channels, signal has " +
                     std::to_string(c_in));
  if (bias.shape()[0] != c_out)
    throw ShapeError("conv1d: bias length " + std::to_string(bias.shape()[0]) + " != output channels " +
                     std::to_string(c_out));
  const int pad = (k - 1) / 2;
  ConstMatMap<S> xm = x.mat();
  MatX<S> y(c_out, len);
  y.colwise() = bias.flat();
  for (int j = 0; j < k; ++j) {
    const int off = j - pad;
    const int lo = std::max(0, -off);
    const int hi = len - std::max(0, off);
    if (hi <= lo) continue;
    MatX<S> w = detail::kernel_tap(kernel.flat(), c_out, c_in, k, j);
    y.block(0, lo, c_out, hi - lo).noalias() += w * xm.block(0, lo + off, c_in, hi - lo);
  }
  Tensor<S> out = x.tape->node({c_out, len}, detail::to_flat(y), {x, kernel, bias});
  x.tape->set_back(out, [ix = x.id, ik = kernel.id, ib = bias.id, io = out.id, c_in, c_out, k, len,
                         pad](Tape<S>& t) {
    MatMap<S> g = t.grad_mat(io);
    ConstMatMap<S> xm = t.val_mat(ix);
    const VecX<S>& kflat = t.val_vec(ik);
    if (t.requires_grad(ib)) t.grad_vec(ib) += g.rowwise().sum();
    for (int j = 0; j < k; ++j) {
      const int off = j - pad;
      const int lo = std::max(0, -off);
      const int hi = len - std::max(0, off);
      if (hi <= lo) continue;
      if (t.requires_grad(ik)) {
        MatX<S> dw(c_out, c_in);
        dw.noalias() =
            g.block(0, lo, c_out, hi - lo) * xm.block(0, lo + off, c_in, hi - lo).transpose();
        VecX<S>& gk = t.grad_vec(ik);
        for (int co = 0; co < c_out; ++co)
          for (int ci = 0; ci < c_in; ++ci) gk[(co * c_in + ci) * k + j] += dw(co, ci);
      }
      if (t.requires_grad(ix)) {
        MatX<S> w = detail::kernel_tap(kflat, c_out, c_in, k, j);
        t.grad_mat(ix).block(0, lo + off, c_in, hi - lo).noalias() +=
            w.transpose() * g.block(0, lo, c_out, hi - lo);
      }
    }
  });
  return out;
}

// --------------------------------------------------------------------------
// inverted dropout: train-time zeroing with 1/(1-p) rescale, identity at eval
// --------------------------------------------------------------------------

template <typename S>
Tensor<S> dropout(Tensor<S> x, double p, bool training, Rng* rng) {
  if (p < 0.0 || p >= 1.0)
    throw ConfigError("dropout: probability must be in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) {
    VecX<S> v = x.flat();
    Tensor<S> out = x.tape->node(x.shape(), std::move(v), {x});
    x.tape->set_back(out, [ix = x.id, io = out.id](Tape<S>& t) {
      t.grad_vec(ix) += t.grad_vec(io);
    });
    return out;
  }
  if (rng == nullptr) throw UsageError("dropout: training mode needs an rng");
  const S keep_scale = S(1.0 / (1.0 - p));
  VecX<S> mask(x.size());
  for (std::int64_t i = 0; i < x.size(); ++i) mask(i) = rng->bernoulli(p) ? S(0) : keep_scale;
  VecX<S> v = x.flat().cwiseProduct(mask);
  Tensor<S> out = x.tape->node(x.shape(), std::move(v), {x});
  x.tape->set_back(out, [ix = x.id, io = out.id, mask = std::move(mask)](Tape<S>& t) {
    t.grad_vec(ix) += t.grad_vec(io).cwiseProduct(mask);
  });
  return out;
}

template <typename S>
bool all_finite(const VecX<S>& v) {
  return v.allFinite();
}

}  // namespace tsd
