#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <tsd/tensor.hpp>

#include "oracles.hpp"

using namespace tsd;
using Eigen::VectorXd;

namespace {

MatX<double> random_mat(int r, int c, Rng& rng) {
  MatX<double> m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
  return m;
}

// Finite-difference check of a scalar graph against the tape gradients.
// `build` maps leaf tensors to the scalar output.
template <typename Build>
void check_grads(std::vector<MatX<double>>& leaves, Build&& build, double tol,
                 double floor = 1e-3) {
  // analytic
  std::vector<VecX<double>> analytic;
  {
    Tape<double> tape;
    std::vector<Tensor<double>> in;
    in.reserve(leaves.size());
    for (auto& l : leaves) in.push_back(tape.leaf(l, true));
    Tensor<double> loss = build(tape, in);
    tape.backward(loss);
    for (auto& t : in) analytic.push_back(t.grad());
  }
  // finite differences
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto f = [&]() {
      Tape<double> tape;
      std::vector<Tensor<double>> in;
      for (auto& l : leaves) in.push_back(tape.leaf(l, false));
      return build(tape, in).scalar();
    };
    VectorXd flat = Eigen::Map<const VectorXd>(leaves[li].data(), leaves[li].size());
    Eigen::Map<VectorXd> view(leaves[li].data(), leaves[li].size());
    VectorXd fd(flat.size());
    for (Eigen::Index i = 0; i < flat.size(); ++i) {
      const double keep = view(i);
      view(i) = keep + 1e-5;
      const double hi = f();
      view(i) = keep - 1e-5;
      const double lo = f();
      view(i) = keep;
      fd(i) = (hi - lo) / 2e-5;
    }
    const double err = oracle::max_rel_err(VectorXd(analytic[li]), fd, floor);
    INFO("leaf ", li, " rel err ", err);
    CHECK(err < tol);
  }
}

}  // namespace

TEST_CASE("matmul: identity passes through") {
  Tape<double> tape;
  MatX<double> eye = MatX<double>::Identity(3, 3);
  Rng rng(7);
  MatX<double> b = random_mat(3, 2, rng);
  auto r = matmul(tape.leaf(eye, false), tape.leaf(b, false));
  CHECK((r.mat() - b).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("matmul: hand arithmetic 1x2 * 2x1") {
  Tape<double> tape;
  MatX<double> a(1, 2);
  a << 1, 2;
  MatX<double> b(2, 1);
  b << 3, 4;
  auto r = matmul(tape.leaf(a, false), tape.leaf(b, false));
  CHECK(r.scalar() == doctest::Approx(11.0));
}

TEST_CASE("matmul: shape mismatch names both shapes") {
  Tape<double> tape;
  auto a = tape.leaf(MatX<double>::Zero(4, 5), false);
  auto b = tape.leaf(MatX<double>::Zero(3, 2), false);
  CHECK_THROWS_WITH_AS(matmul(a, b), "matmul: inner dimensions disagree: [4 x 5] * [3 x 2]",
                       ShapeError);
}

TEST_CASE("matmul: gradient matches finite differences") {
  Rng rng(42);
  std::vector<MatX<double>> leaves{random_mat(4, 5, rng), random_mat(5, 3, rng)};
  check_grads(
      leaves,
      [](Tape<double>& t, std::vector<Tensor<double>>& in) {
        return sum_squares(matmul(in[0], in[1]));
      },
      1e-6);
}

TEST_CASE("matmul_t: gradient matches finite differences") {
  Rng rng(43);
  std::vector<MatX<double>> leaves{random_mat(4, 5, rng), random_mat(3, 5, rng)};
  check_grads(
      leaves,
      [](Tape<double>& t, std::vector<Tensor<double>>& in) {
        return sum_squares(matmul_t(in[0], in[1]));
      },
      1e-6);
}

TEST_CASE("softmax_rows: uniform on a zero row") {
  Tape<double> tape;
  auto y = softmax_rows(tape.leaf(MatX<double>::Zero(1, 4), false));
  for (int j = 0; j < 4; ++j) CHECK(y.mat()(0, j) == doctest::Approx(0.25));
}

TEST_CASE("softmax_rows: large logits do not overflow") {
  Tape<double> tape;
  MatX<double> x(1, 2);
  x << 1000.0, 0.0;
  auto y = softmax_rows(tape.leaf(x, false));
  CHECK(y.mat()(0, 0) == doctest::Approx(1.0));
  CHECK(y.mat()(0, 1) == doctest::Approx(0.0));
  CHECK(all_finite(y.flat()));
}

TEST_CASE("softmax_rows: rows sum to one") {
  Rng rng(5);
  Tape<double> tape;
  auto y = softmax_rows(tape.leaf(random_mat(3, 5, rng), false));
  for (int r = 0; r < 3; ++r) CHECK(std::abs(y.mat().row(r).sum() - 1.0) < 1e-12);
}

TEST_CASE("softmax_rows: gradient matches finite differences") {
  Rng rng(44);
  std::vector<MatX<double>> leaves{random_mat(3, 6, rng)};
  // weighted sum keeps the check sensitive to every output entry
  MatX<double> w = random_mat(3, 6, rng);
  check_grads(
      leaves,
      [&w](Tape<double>& t, std::vector<Tensor<double>>& in) {
        auto y = softmax_rows(in[0]);
        auto wk = t.constant(w);
        return sum_all(matmul_t(y, wk));
      },
      1e-4);
}

TEST_CASE("conv1d: delta kernel is the identity") {
  Tape<double> tape;
  Rng rng(9);
  MatX<double> x = random_mat(1, 7, rng);
  VecX<double> kflat(3);
  kflat << 0, 1, 0;
  auto y = conv1d(tape.leaf(x, false), tape.leaf(kflat, {1, 1, 3}, false),
                  tape.leaf(VecX<double>::Zero(1), {1}, false));
  CHECK((y.mat() - x).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("conv1d: box kernel boundary arithmetic") {
  Tape<double> tape;
  MatX<double> x = MatX<double>::Ones(1, 5);
  VecX<double> kflat(3);
  kflat << 1, 1, 1;
  auto y = conv1d(tape.leaf(x, false), tape.leaf(kflat, {1, 1, 3}, false),
                  tape.leaf(VecX<double>::Zero(1), {1}, false));
  VecX<double> expect(5);
  expect << 2, 3, 3, 3, 2;
  CHECK((y.flat() - expect).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("conv1d: even kernel size rejected") {
  Tape<double> tape;
  auto x = tape.leaf(MatX<double>::Zero(1, 5), false);
  auto k = tape.leaf(VecX<double>::Zero(4), Shape{1, 1, 4}, false);
  auto b = tape.leaf(VecX<double>::Zero(1), Shape{1}, false);
  CHECK_THROWS_AS(conv1d(x, k, b), ConfigError);
}

TEST_CASE("conv1d: gradients match finite differences") {
  Rng rng(45);
  MatX<double> x = random_mat(3, 9, rng);
  MatX<double> kern = random_mat(1, 2 * 3 * 3, rng);  // flat [c_out=2][c_in=3][k=3]
  MatX<double> bias = random_mat(1, 2, rng);
  std::vector<MatX<double>> leaves{x, kern, bias};
  check_grads(
      leaves,
      [](Tape<double>& t, std::vector<Tensor<double>>& in) {
        auto xs = in[0];
        auto k = reshape(in[1], {2, 3, 3});
        auto b = reshape(in[2], {2});
        return sum_squares(conv1d(xs, k, b));
      },
      1e-5);
}

TEST_CASE("layer_norm: constant row collapses to the bias") {
  Tape<double> tape;
  MatX<double> x = MatX<double>::Constant(2, 6, 3.5);
  auto y = layer_norm(tape.leaf(x, false), tape.leaf(VecX<double>::Ones(6), {6}, false),
                      tape.leaf(VecX<double>::Zero(6), {6}, false), 1e-5);
  CHECK(y.flat().cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("layer_norm: already-normalized row is unchanged") {
  Tape<double> tape;
  MatX<double> x(1, 2);
  x << 1, -1;
  auto y = layer_norm(tape.leaf(x, false), tape.leaf(VecX<double>::Ones(2), {2}, false),
                      tape.leaf(VecX<double>::Zero(2), {2}, false), 1e-15);
  CHECK(y.mat()(0, 0) == doctest::Approx(1.0));
  CHECK(y.mat()(0, 1) == doctest::Approx(-1.0));
}

TEST_CASE("layer_norm: output rows have zero mean, unit variance pre-affine") {
  Rng rng(11);
  Tape<double> tape;
  MatX<double> x = random_mat(4, 8, rng);
  auto y = layer_norm(tape.leaf(x, false), tape.leaf(VecX<double>::Ones(8), {8}, false),
                      tape.leaf(VecX<double>::Zero(8), {8}, false), 1e-12);
  for (int r = 0; r < 4; ++r) {
    VectorXd row = y.mat().row(r).transpose();
    CHECK(std::abs(oracle::mean(row)) < 1e-10);
    CHECK(std::abs(oracle::var_biased(row) - 1.0) < 1e-6);
  }
}

TEST_CASE("layer_norm: gradients match finite differences") {
  Rng rng(46);
  std::vector<MatX<double>> leaves{random_mat(3, 6, rng), random_mat(1, 6, rng),
                                   random_mat(1, 6, rng)};
  check_grads(
      leaves,
      [](Tape<double>& t, std::vector<Tensor<double>>& in) {
        auto g = reshape(in[1], {6});
        auto b = reshape(in[2], {6});
        return sum_squares(layer_norm(in[0], g, b, 1e-5));
      },
      1e-4);
}

TEST_CASE("dropout: p=0 at train time is the identity") {
  Rng rng(3);
  Tape<double> tape;
  MatX<double> x = random_mat(4, 4, rng);
  auto y = dropout(tape.leaf(x, false), 0.0, true, &rng);
  CHECK((y.mat() - x).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("dropout: eval mode is the identity") {
  Rng rng(3);
  Tape<double> tape;
  MatX<double> x = random_mat(4, 4, rng);
  auto y = dropout(tape.leaf(x, false), 0.1, false, nullptr);
  CHECK((y.mat() - x).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("dropout: p >= 1 rejected") {
  Rng rng(3);
  Tape<double> tape;
  auto x = tape.leaf(MatX<double>::Zero(2, 2), false);
  CHECK_THROWS_AS(dropout(x, 1.0, true, &rng), ConfigError);
  CHECK_THROWS_AS(dropout(x, -0.1, true, &rng), ConfigError);
}

TEST_CASE("dropout: survivor fraction and mean over 1e6 elements") {
  Rng rng(123);
  Tape<double> tape;
  const int n = 1000000;
  VecX<double> ones = VecX<double>::Ones(n);
  auto y = dropout(tape.leaf(ones, {n}, false), 0.1, true, &rng);
  const double survivors = double((y.flat().array() > 0.0).count()) / n;
  CHECK(survivors == doctest::Approx(0.9).epsilon(0.0112));
  CHECK(y.flat().mean() == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("dropout: gradient passes through the mask") {
  Rng rng(47);
  Tape<double> tape;
  MatX<double> x = random_mat(5, 5, rng);
  auto xt = tape.leaf(x, true);
  Rng drop_rng(99);
  auto y = dropout(xt, 0.3, true, &drop_rng);
  MatX<double> yv = y.mat();
  tape.backward(sum_all(y));
  // wherever the output survived, grad is the inverted-dropout scale
  for (int i = 0; i < 25; ++i) {
    const double m = yv(i / 5, i % 5) == 0.0 && x(i / 5, i % 5) != 0.0 ? 0.0 : 1.0 / 0.7;
    CHECK(xt.grad()(i) == doctest::Approx(m));
  }
}

TEST_CASE("backward: sum gives unit gradients") {
  Tape<double> tape;
  Rng rng(1);
  auto x = tape.leaf(random_mat(3, 3, rng), true);
  tape.backward(sum_all(x));
  CHECK((x.grad().array() - 1.0).abs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("backward: mse of [2] against zero target, length 1") {
  Tape<double> tape;
  VecX<double> xv(1);
  xv << 2.0;
  auto x = tape.leaf(xv, {1}, true);
  auto target = tape.constant(VecX<double>::Zero(1), {1});
  auto loss = scale(sum_squares(sub(x, target)), 1.0);  // 1/M with M = 1
  CHECK(loss.scalar() == doctest::Approx(4.0));
  tape.backward(loss);
  CHECK(x.grad()(0) == doctest::Approx(4.0));
}

TEST_CASE("backward: non-scalar loss rejected") {
  Tape<double> tape;
  auto x = tape.leaf(MatX<double>::Ones(2, 2), true);
  CHECK_THROWS_AS(tape.backward(x), UsageError);
}

TEST_CASE("backward: each node replayed exactly once (diamond graph)") {
  Tape<double> tape;
  VecX<double> xv(1);
  xv << 1.5;
  auto x = tape.leaf(xv, {1}, true);
  auto z = add(x, x);
  auto w = add(z, z);
  tape.backward(sum_all(w));
  CHECK(x.grad()(0) == doctest::Approx(4.0));
  // add, add, sum = 3 interior nodes replayed
  CHECK(tape.replayed() == 3);
}

TEST_CASE("backward: tape refuses reuse after the sweep") {
  Tape<double> tape;
  auto x = tape.leaf(MatX<double>::Ones(1, 1), true);
  tape.backward(sum_all(x));
  CHECK_THROWS_AS(sum_all(x), UsageError);
  CHECK_THROWS_AS(tape.backward(x), UsageError);
}

TEST_CASE("structural ops: gradients match finite differences") {
  Rng rng(48);
  std::vector<MatX<double>> leaves{random_mat(4, 6, rng), random_mat(4, 6, rng),
                                   random_mat(1, 8, rng)};
  check_grads(
      leaves,
      [](Tape<double>& t, std::vector<Tensor<double>>& in) {
        auto a = slice_cols(in[0], 1, 4);                                    // [4x4]
        auto b = transpose(slice_cols(in[1], 2, 4));                         // [4x4]
        auto c = concat_rows(std::vector<Tensor<double>>{a, matmul(a, b)});  // [4x8]
        auto d = relu(sum_over_chunk(c, 2));                                 // [2x8]
        auto e = add_rowvec(d, reshape(in[2], {8}));
        return sum_squares(e);
      },
      1e-4);
}

TEST_CASE("sum_over_chunk: sums groups of rows") {
  Tape<double> tape;
  MatX<double> x(4, 2);
  x << 1, 2, 3, 4, 5, 6, 7, 8;
  auto y = sum_over_chunk(tape.leaf(x, false), 2);
  CHECK(y.mat()(0, 0) == doctest::Approx(4.0));
  CHECK(y.mat()(0, 1) == doctest::Approx(6.0));
  CHECK(y.mat()(1, 0) == doctest::Approx(12.0));
  CHECK(y.mat()(1, 1) == doctest::Approx(14.0));
}

TEST_CASE("replaying a seeded graph is bit-identical") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    Tape<double> tape;
    MatX<double> xv(6, 8);
    for (int i = 0; i < xv.size(); ++i) xv(i / 8, i % 8) = rng.uniform(-1, 1);
    auto x = tape.leaf(xv, false);
    Rng drop(derive_seed(seed, 1));
    auto y = dropout(softmax_rows(matmul_t(x, x)), 0.2, true, &drop);
    return VecX<double>(y.flat());
  };
  VecX<double> a = run(2024), b = run(2024);
  CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);
}
