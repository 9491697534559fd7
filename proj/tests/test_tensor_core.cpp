#include <doctest.h>

#include <cmath>

#include "lino/errors.hpp"
#include "lino/ops.hpp"
#include "support/gradcheck.hpp"

using namespace lino;
using lino::testing::gradcheck;
using lino::testing::random_tensor;

namespace {

// loss = sum(out * R) for a fixed random R, so every output element matters.
Var project(Tape& tape, Var out, std::uint64_t seed = 99) {
  Rng rng(seed);
  return ops::sum(ops::mul(out, tape.constant(random_tensor(out.shape(), rng))));
}

Tensor brute_conv(const Tensor& H, const Tensor& phi, const Tensor& beta) {
  const std::size_t C = phi.dim(0), D = phi.dim(1);
  Tensor out(H.shape());
  const std::size_t batch = H.numel() / (C * D);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t d = 0; d < D; ++d) {
        double acc = beta[c];
        for (std::size_t k = 0; k < D; ++k) {
          if (k <= d) acc += phi[c * D + k] * H[(n * C + c) * D + d - k];
        }
        out[(n * C + c) * D + d] = acc;
      }
  return out;
}

}  // namespace

TEST_CASE("tensor shape invariants") {
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor(Shape{0}), DimensionError);
  Tensor t({2, 3});
  CHECK(t.numel() == 6);
  t.at({1, 2}) = 5.0;
  CHECK(t[5] == 5.0);
}

TEST_CASE("elementwise examples") {
  Tape tape;
  CHECK(ops::tanh(tape.constant(Tensor::vec({0.0}))).value()[0] == 0.0);
  Var s = ops::add(tape.constant(Tensor::vec({1, 2})), tape.constant(Tensor::vec({3, 4})));
  CHECK(s.value() == Tensor::vec({4, 6}));
  CHECK_THROWS_AS(ops::add(tape.constant(Tensor::vec({1, 2})), tape.constant(Tensor::vec({1, 2, 3}))), DimensionError);
}

TEST_CASE("mul backward follows the product rule") {
  Tape tape;
  Var a = tape.leaf(Tensor::vec({2, 3}));
  Var b = tape.leaf(Tensor::vec({4, 5}));
  Var p = ops::mul(a, b);
  CHECK(p.value() == Tensor::vec({8, 15}));
  tape.backward(ops::sum(p));  // seed [1, 1]
  CHECK(a.grad() == Tensor::vec({4, 5}));
  CHECK(b.grad() == Tensor::vec({2, 3}));
}

TEST_CASE("linear examples") {
  Tape tape;
  Var W = tape.constant(Tensor({2, 2}, {1, 0, 0, 2}));
  Var b = tape.constant(Tensor::vec({0, 1}));
  CHECK(ops::linear(tape.constant(Tensor::vec({1, 2})), W, b).value() == Tensor::vec({1, 5}));

  Rng rng(3);
  Var Wr = tape.constant(random_tensor({2, 2}, rng));
  CHECK(ops::linear(tape.constant(Tensor::zeros({2})), Wr, tape.constant(Tensor::vec({1, 2}))).value() ==
        Tensor::vec({1, 2}));

  Var x = tape.constant(random_tensor({3, 2}, rng));
  Var eye = tape.constant(Tensor({2, 2}, {1, 0, 0, 1}));
  CHECK(ops::linear(x, eye, tape.constant(Tensor::zeros({2}))).value() == x.value());

  CHECK_THROWS_AS(ops::linear(tape.constant(Tensor::zeros({3})), Wr, b), DimensionError);
}

TEST_CASE("causal depthwise convolution examples") {
  Tape tape;
  auto conv1 = [&](Tensor phi) {
    return ops::causal_depthwise_conv(tape.constant(Tensor({1, 3}, {1, 2, 3})), tape.constant(phi.reshaped({1, 3})),
                                      tape.constant(Tensor::zeros({1})))
        .value()
        .reshaped({3});
  };
  CHECK(conv1(Tensor::vec({1, 0, 0})) == Tensor::vec({1, 2, 3}));
  CHECK(conv1(Tensor::vec({0, 1, 0})) == Tensor::vec({0, 1, 2}));
  CHECK(conv1(Tensor::vec({1, 1, 1})) == Tensor::vec({1, 3, 6}));

  CHECK_THROWS_AS(ops::causal_depthwise_conv(tape.constant(Tensor::zeros({2, 4})), tape.constant(Tensor::zeros({2, 3})),
                                             tape.constant(Tensor::zeros({2}))),
                  DimensionError);
}

TEST_CASE("causal conv equals the brute-force triple loop exactly") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t C = 1 + trial % 3, D = 2 + trial % 7, B = 1 + trial % 2;
    Tensor H = random_tensor({B, C, D}, rng), phi = random_tensor({C, D}, rng), beta = random_tensor({C}, rng);
    Tape tape;
    Var out = ops::causal_depthwise_conv(tape.constant(H), tape.constant(phi), tape.constant(beta));
    // Same summation order as the op, so equality is exact.
    CHECK(max_abs_diff(out.value(), brute_conv(H, phi, beta)) <= 1e-12);
  }
}

TEST_CASE("softmax examples and invariants") {
  Tape tape;
  CHECK(ops::softmax(tape.constant(Tensor::vec({0, 0})), 0).value() == Tensor::vec({0.5, 0.5}));
  Var s = ops::softmax(tape.constant(Tensor::vec({0, std::log(2.0)})), 0);
  CHECK(s.value()[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(s.value()[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));

  Rng rng(5);
  Tensor x = random_tensor({4, 6}, rng, 3.0);
  Tensor shifted = x;
  for (auto& v : shifted.data()) v += 17.5;
  for (int axis : {0, 1, -1}) {
    Var a = ops::softmax(tape.constant(x), axis);
    Var b = ops::softmax(tape.constant(shifted), axis);
    CHECK(max_abs_diff(a.value(), b.value()) < 1e-12);
    Var sums = ops::sum_axis(a, axis);
    for (double v : sums.value().data()) CHECK(std::abs(v - 1.0) < 1e-12);
  }
}

TEST_CASE("layer norm examples") {
  Tape tape;
  Var g = tape.constant(Tensor::vec({1, 1}));
  Var z = tape.constant(Tensor::vec({0, 0}));
  CHECK(ops::layer_norm(tape.constant(Tensor::vec({4, 4})), g, z, 1e-5).value() == Tensor::vec({0, 0}));
  Var y = ops::layer_norm(tape.constant(Tensor::vec({1, 3})), g, z, 1e-14);
  CHECK(y.value()[0] == doctest::Approx(-1.0).epsilon(1e-10));
  CHECK(y.value()[1] == doctest::Approx(1.0).epsilon(1e-10));
  Var y5 = ops::layer_norm(tape.constant(Tensor::vec({1, 3})), g, tape.constant(Tensor::vec({5, 5})), 1e-14);
  CHECK(y5.value()[0] == doctest::Approx(4.0).epsilon(1e-10));
  CHECK(y5.value()[1] == doctest::Approx(6.0).epsilon(1e-10));

  Rng rng(8);
  Tensor x = random_tensor({5, 16}, rng, 4.0);
  Var n = ops::layer_norm(tape.constant(x), tape.constant(Tensor::full({16}, 1.0)), tape.constant(Tensor::zeros({16})));
  Var means = ops::mean_axis(n, -1);
  for (double v : means.value().data()) CHECK(std::abs(v) < 1e-10);
  CHECK_THROWS_AS(ops::layer_norm(tape.constant(x), tape.constant(Tensor::full({16}, 1.0)),
                                  tape.constant(Tensor::zeros({16})), 0.0),
                  ConfigError);
}

TEST_CASE("dropout") {
  Rng rng(1);
  Tensor x = random_tensor({1000}, rng);
  Tape tape;
  Var xv = tape.constant(x);
  Rng drop(42);
  CHECK(ops::dropout(xv, 0.5, ops::Mode::eval, drop).value() == x);  // bitwise identity
  CHECK(ops::dropout(xv, 0.0, ops::Mode::train, drop).value() == x);
  CHECK_THROWS_AS(ops::dropout(xv, 1.0, ops::Mode::train, drop), ConfigError);
  CHECK_THROWS_AS(ops::dropout(xv, -0.1, ops::Mode::train, drop), ConfigError);

  Var ones = tape.constant(Tensor::full({100000}, 1.0));
  Var d = ops::dropout(ones, 0.5, ops::Mode::train, drop);
  std::size_t kept = 0;
  for (double v : d.value().data()) {
    if (v != 0.0) {
      ++kept;
      CHECK(v == 2.0);
    }
  }
  const double rate = static_cast<double>(kept) / 100000.0;
  CHECK(rate >= 0.495);
  CHECK(rate <= 0.505);
}

TEST_CASE("backward basics") {
  {
    Tape tape;
    Var x = tape.leaf(Tensor::vec({1, 2, 3}));
    tape.backward(ops::sum(x));
    CHECK(x.grad() == Tensor::vec({1, 1, 1}));
  }
  {
    Tape tape;
    Var x = tape.leaf(Tensor::scalar(3.0));
    tape.backward(ops::square(x));
    CHECK(x.grad()[0] == 6.0);
  }
  {
    Tape tape;
    Var x = tape.leaf(Tensor::vec({1, 2}));
    CHECK_THROWS_AS(tape.backward(x), DimensionError);
  }
}

TEST_CASE("non-finite forward values are an error") {
  Tape tape;
  Var x = tape.constant(Tensor::vec({1e300}));
  CHECK_THROWS_AS(ops::square(x), NumericalError);
}

TEST_CASE("reductions and reshapes") {
  Tape tape;
  Var m = ops::mean_axis(tape.constant(Tensor({2, 2}, {1, 3, 5, 7})), 0);
  CHECK(m.value() == Tensor::vec({3, 5}));

  Rng rng(2);
  Tensor x = random_tensor({1, 4}, rng);
  Var xv = tape.constant(x);
  const Var pair[] = {xv, xv};
  CHECK(ops::concat(pair, -1).shape() == Shape{1, 8});

  Tensor y = random_tensor({3, 5, 2}, rng);
  Var yv = tape.constant(y);
  for (int axis : {0, 1, 2}) {
    const std::size_t n = y.shape()[static_cast<std::size_t>(axis)];
    if (n < 2) continue;
    const Var parts[] = {ops::slice(yv, axis, 0, 1), ops::slice(yv, axis, 1, n)};
    CHECK(ops::concat(parts, axis).value() == y);
  }
  Var t = ops::transpose(ops::transpose(yv, 0, 2), 0, 2);
  CHECK(t.value() == y);
  CHECK(ops::transpose(yv, 1, 2).value().at({2, 1, 4}) == y.at({2, 4, 1}));
  CHECK_THROWS_AS(ops::slice(yv, 1, 3, 3), DimensionError);
  CHECK_THROWS_AS(ops::sum_axis(yv, 3), DimensionError);
}

TEST_CASE("every primitive matches central finite differences") {
  Rng rng(2024);
  constexpr double tol = 1e-4;
  using V = std::vector<Var>;

  SUBCASE("add / sub / mul / scale / add-scalar") {
    auto in = std::vector<Tensor>{random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)};
    CHECK(gradcheck(in, [](Tape& t, const V& l) { return project(t, ops::add(l[0], l[1])); }) < tol);
    CHECK(gradcheck(in, [](Tape& t, const V& l) { return project(t, ops::sub(l[0], l[1])); }) < tol);
    CHECK(gradcheck(in, [](Tape& t, const V& l) { return project(t, ops::mul(l[0], l[1])); }) < tol);
    CHECK(gradcheck(in, [](Tape& t, const V& l) { return project(t, ops::scale(ops::add(l[0], 0.3), -1.7)); }) < tol);
  }
  SUBCASE("tanh / gelu / square / abs") {
    auto in = std::vector<Tensor>{random_tensor({20}, rng)};
    CHECK(gradcheck(in, [](Tape& t, const V& l) { return project(t, ops::tanh(l[0])); }) < tol);
    CHECK(gradcheck(in, [](Tape& t, const V& l) { return project(t, ops::gelu(l[0])); }) < tol);
    CHECK(gradcheck(in, [](Tape& t, const V& l) { return project(t, ops::square(l[0])); }) < tol);
    CHECK(gradcheck(in, [](Tape& t, const V& l) { return project(t, ops::abs(l[0])); }) < tol);
  }
  SUBCASE("linear") {
    auto in = std::vector<Tensor>{random_tensor({2, 3, 4}, rng), random_tensor({4, 5}, rng), random_tensor({5}, rng)};
    CHECK(gradcheck(in, [](Tape& t, const V& l) { return project(t, ops::linear(l[0], l[1], l[2])); }) < tol);
  }
  SUBCASE("causal depthwise conv") {
    auto in = std::vector<Tensor>{random_tensor({2, 3, 6}, rng), random_tensor({3, 6}, rng), random_tensor({3}, rng)};
    CHECK(gradcheck(in, [](Tape& t, const V& l) {
            return project(t, ops::causal_depthwise_conv(l[0], l[1], l[2]));
          }) < tol);
  }
  SUBCASE("softmax on each axis") {
    auto in = std::vector<Tensor>{random_tensor({2, 3, 4}, rng)};
    for (int axis : {0, 1, 2}) {
      CHECK(gradcheck(in, [axis](Tape& t, const V& l) { return project(t, ops::softmax(l[0], axis)); }) < tol);
    }
  }
  SUBCASE("layer norm") {
    auto in = std::vector<Tensor>{random_tensor({3, 8}, rng), random_tensor({8}, rng), random_tensor({8}, rng)};
    CHECK(gradcheck(in, [](Tape& t, const V& l) { return project(t, ops::layer_norm(l[0], l[1], l[2], 1e-5)); }) < tol);
  }
  SUBCASE("dropout (fixed mask)") {
    auto in = std::vector<Tensor>{random_tensor({30}, rng)};
    CHECK(gradcheck(in, [](Tape& t, const V& l) {
            Rng mask(7);  // same mask on every evaluation
            return project(t, ops::dropout(l[0], 0.3, ops::Mode::train, mask));
          }) < tol);
  }
  SUBCASE("reductions, concat, slice, transpose, reshape, repeat, row_affine") {
    auto in = std::vector<Tensor>{random_tensor({2, 3, 4}, rng)};
    CHECK(gradcheck(in, [](Tape& t, const V& l) { return project(t, ops::sum_axis(l[0], 1)); }) < tol);
    CHECK(gradcheck(in, [](Tape& t, const V& l) { return project(t, ops::mean_axis(l[0], -1, true)); }) < tol);
    CHECK(gradcheck(in, [](Tape& t, const V& l) { return ops::mean(ops::square(l[0])); }) < tol);
    CHECK(gradcheck(in, [](Tape& t, const V& l) {
            const Var parts[] = {l[0], ops::scale(l[0], 2.0)};
            return project(t, ops::concat(parts, 1));
          }) < tol);
    CHECK(gradcheck(in, [](Tape& t, const V& l) { return project(t, ops::slice(l[0], 2, 1, 3)); }) < tol);
    CHECK(gradcheck(in, [](Tape& t, const V& l) { return project(t, ops::transpose(l[0], 0, 2)); }) < tol);
    CHECK(gradcheck(in, [](Tape& t, const V& l) { return project(t, ops::reshape(l[0], {6, 4})); }) < tol);
    CHECK(gradcheck(in, [](Tape& t, const V& l) {
            return project(t, ops::repeat_axis(ops::sum_axis(l[0], 1, true), 1, 5));
          }) < tol);
    CHECK(gradcheck(in, [](Tape& t, const V& l) {
            Tensor sc({2, 3}, {1, 2, 3, 4, 5, 6}), sh({2, 3}, {0, 1, 0, 1, 0, 1});
            return project(t, ops::row_affine(l[0], sc, sh));
          }) < tol);
  }
  SUBCASE("composed graph") {
    auto in = std::vector<Tensor>{random_tensor({2, 3, 4}, rng), random_tensor({4, 4}, rng), random_tensor({4}, rng)};
    CHECK(gradcheck(in, [](Tape& t, const V& l) {
            Var h = ops::tanh(ops::linear(l[0], l[1], l[2]));
            Var w = ops::softmax(h, 1);
            Var m = ops::repeat_axis(ops::sum_axis(ops::mul(w, h), 1, true), 1, 3);
            const Var parts[] = {h, m};
            Var c = ops::concat(parts, -1);
            return ops::mean(ops::square(c));
          }) < tol);
  }
}

TEST_CASE("gradients accumulate when a node is reused") {
  Tape tape;
  Var x = tape.leaf(Tensor::vec({2.0}));
  tape.backward(ops::sum(ops::mul(x, x)));
  CHECK(x.grad()[0] == 4.0);
}
