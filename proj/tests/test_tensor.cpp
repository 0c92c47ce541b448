#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "har/gradcheck.hpp"
#include "har/ops.hpp"
#include "har/optim.hpp"
#include "har/tape.hpp"

using namespace har;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

void check_close(const Tensor& a, const Tensor& b, double tol) {
  REQUIRE(a.shape() == b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= tol);
}

}  // namespace

TEST_CASE("tensor construction validates shape") {
  CHECK_THROWS_AS(Tensor(Shape{2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  Tensor t(Shape{2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.sum() == doctest::Approx(9.0));
  CHECK_THROWS_AS(t.reshaped(Shape{4}), DimensionError);
  CHECK(t.reshaped(Shape{3, 2}).shape() == Shape{3, 2});
}

TEST_CASE("require_finite flags NaN") {
  Tensor t = Tensor::vector({1.0, std::nan("")});
  CHECK_FALSE(t.all_finite());
  CHECK_THROWS_AS(require_finite(t, "probe"), NumericError);
}

TEST_CASE("matmul hand cases") {
  Tape tape;
  const Var id = tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  const Var col = tape.constant(Tensor::matrix(2, 1, {3, 4}));
  CHECK(tape.value(ops::matmul(tape, id, col)) == Tensor::matrix(2, 1, {3, 4}));
  const Var row = tape.constant(Tensor::matrix(1, 2, {1, 2}));
  CHECK(tape.value(ops::matmul(tape, row, col))[0] == 11.0);
  CHECK_THROWS_AS(ops::matmul(tape, col, col), DimensionError);
}

TEST_CASE("matmul matches triple loop") {
  std::mt19937_64 rng(3);
  const Tensor a = random_tensor({4, 5}, rng), b = random_tensor({5, 3}, rng);
  Tensor oracle(Shape{4, 3});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t k = 0; k < 5; ++k) oracle.at(i, j) += a.at(i, k) * b.at(k, j);
  Tape tape;
  check_close(tape.value(ops::matmul(tape, tape.constant(a), tape.constant(b))), oracle, 1e-12);
}

TEST_CASE("conv2d hand cases") {
  Tape tape;
  const Var ones = tape.constant(Tensor(Shape{1, 3, 3}, 1.0));
  const Var two = tape.constant(Tensor(Shape{1, 1, 1, 1}, 2.0));
  CHECK(tape.value(ops::conv2d(tape, ones, two, 1, 0)) == Tensor(Shape{1, 3, 3}, 2.0));

  const Var ramp = tape.constant(Tensor(Shape{1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}));
  const Var box = tape.constant(Tensor(Shape{1, 1, 2, 2}, 1.0));
  CHECK(tape.value(ops::conv2d(tape, ramp, box, 1, 0)) == Tensor(Shape{1, 2, 2}, {12, 16, 24, 28}));

  const Var big = tape.constant(Tensor(Shape{1, 1, 5, 5}, 1.0));
  CHECK_THROWS_AS(ops::conv2d(tape, ramp, big, 1, 0), DimensionError);
  CHECK_NOTHROW(ops::conv2d(tape, ramp, big, 1, 1));
}

TEST_CASE("conv2d matches nested-loop oracle") {
  std::mt19937_64 rng(11);
  for (auto [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 0}, {1, 1}, {2, 1}, {3, 2}}) {
    const std::size_t cin = 4, h = 16, w = 13, cout = 3, kh = 3, kw = 2;
    const Tensor x = random_tensor({cin, h, w}, rng), k = random_tensor({cout, cin, kh, kw}, rng);
    const std::size_t oh = (h + 2 * pad - kh) / stride + 1, ow = (w + 2 * pad - kw) / stride + 1;
    Tensor oracle(Shape{cout, oh, ow});
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j)
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t u = 0; u < kh; ++u)
              for (std::size_t v = 0; v < kw; ++v) {
                const long r = static_cast<long>(i * stride + u) - static_cast<long>(pad);
                const long q = static_cast<long>(j * stride + v) - static_cast<long>(pad);
                if (r < 0 || q < 0 || r >= static_cast<long>(h) || q >= static_cast<long>(w)) continue;
                oracle.at(o, i, j) += x.at(c, r, q) * k[((o * cin + c) * kh + u) * kw + v];
              }
    Tape tape;
    check_close(tape.value(ops::conv2d(tape, tape.constant(x), tape.constant(k), stride, pad)), oracle, 1e-12);
  }
}

TEST_CASE("maxpool2d") {
  Tape tape;
  CHECK(tape.value(ops::maxpool2d(tape, tape.constant(Tensor(Shape{1, 2, 2}, {1, 2, 3, 4})), 2, 2))[0] == 4.0);
  CHECK_THROWS_AS(ops::maxpool2d(tape, tape.constant(Tensor(Shape{1, 2, 2})), 3, 1), DimensionError);

  SUBCASE("ties route gradient to the first cell") {
    Tensor grad_sink(Shape{1, 4, 4});
    Tensor input(Shape{1, 4, 4}, 7.0);
    Tape t;
    const Var x = t.parameter(input, &grad_sink);
    const Var y = ops::maxpool2d(t, x, 2, 2);
    CHECK(t.value(y) == Tensor(Shape{1, 2, 2}, 7.0));
    t.backward(ops::sum(t, y));
    CHECK(grad_sink.sum() == 4.0);
    for (std::size_t i : {0u, 2u, 8u, 10u}) CHECK(grad_sink[i] == 1.0);
  }

  SUBCASE("scan oracle") {
    std::mt19937_64 rng(5);
    const Tensor x = random_tensor({1, 6, 6}, rng);
    Tensor oracle(Shape{1, 3, 3});
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        double m = -1e300;
        for (std::size_t u = 0; u < 2; ++u)
          for (std::size_t v = 0; v < 2; ++v) m = std::max(m, x.at(0, 2 * i + u, 2 * j + v));
        oracle.at(0, i, j) = m;
      }
    Tape t;
    CHECK(t.value(ops::maxpool2d(t, t.constant(x), 2, 2)) == oracle);
  }
}

TEST_CASE("relu") {
  Tensor sink(Shape{3});
  const Tensor x = Tensor::vector({-1, 0, 2});
  Tape tape;
  const Var v = tape.parameter(x, &sink);
  const Var y = ops::relu(tape, v);
  CHECK(tape.value(y) == Tensor::vector({0, 0, 2}));
  tape.backward(ops::sum(tape, y));
  CHECK(sink == Tensor::vector({0, 0, 1}));

  Tensor sink2(Shape{4});
  const Tensor neg(Shape{4}, -3.0);
  Tape t2;
  const Var n = t2.parameter(neg, &sink2);
  t2.backward(ops::sum(t2, ops::relu(t2, n)));
  CHECK(sink2 == Tensor(Shape{4}));
}

TEST_CASE("softmax invariants") {
  Tape tape;
  auto sm = [&](std::vector<double> v) { return tape.value(ops::softmax(tape, tape.constant(Tensor::vector(v)))); };
  check_close(sm({0, 0}), Tensor::vector({0.5, 0.5}), 1e-15);
  check_close(sm({1000, 1000}), Tensor::vector({0.5, 0.5}), 1e-15);
  check_close(sm({std::log(1.0), std::log(2.0), std::log(3.0)}), Tensor::vector({1.0 / 6, 2.0 / 6, 3.0 / 6}), 1e-12);

  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor z = random_tensor({7}, rng, 5.0);
    const Tensor p = sm(std::vector<double>(z.data().begin(), z.data().end()));
    CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-9));
    for (auto& v : z.data()) v += 123.0;
    check_close(sm(std::vector<double>(z.data().begin(), z.data().end())), p, 1e-9);
  }
}

TEST_CASE("cross entropy") {
  Tape tape;
  auto ce = [&](std::vector<double> p, std::size_t label) {
    return tape.value(ops::cross_entropy(tape, tape.constant(Tensor::vector(p)), label))[0];
  };
  CHECK(ce({1, 0, 0}, 0) == doctest::Approx(0.0));
  CHECK(ce({0.25, 0.25, 0.25, 0.25}, 2) == doctest::Approx(std::log(4.0)));
  CHECK(ce({0.5, 0.5}, 1) == doctest::Approx(std::log(2.0)));
  CHECK(ce({1, 0}, 1) == doctest::Approx(-std::log(ops::kProbabilityFloor)));
  CHECK_THROWS_AS(ce({0.5, 0.5}, 2), DimensionError);
}

TEST_CASE("lstm cell limits") {
  const std::size_t d = 3, din = 2;
  Tape tape;
  const Var x = tape.constant(Tensor::vector({0.3, -0.7}));
  const Var W0 = tape.constant(Tensor(Shape{4 * d, din + d}));
  const Var b0 = tape.constant(Tensor(Shape{4 * d}));
  ops::LstmState zero{tape.constant(Tensor(Shape{d})), tape.constant(Tensor(Shape{d}))};
  const auto s = ops::lstm_cell(tape, x, zero, W0, b0);
  CHECK(tape.value(s.h) == Tensor(Shape{d}));
  CHECK(tape.value(s.c) == Tensor(Shape{d}));

  // Input gate saturated shut, forget gate wide open.
  Tensor bias(Shape{4 * d});
  for (std::size_t j = 0; j < d; ++j) bias[j] = -60.0;
  for (std::size_t j = d; j < 2 * d; ++j) bias[j] = 60.0;
  const Tensor c = Tensor::vector({0.4, -1.2, 2.0});
  ops::LstmState st{tape.constant(Tensor::vector({0.1, 0.2, 0.3})), tape.constant(c)};
  const auto s2 = ops::lstm_cell(tape, x, st, W0, tape.constant(bias));
  check_close(tape.value(s2.c), c, 1e-12);
  CHECK_THROWS_AS(ops::lstm_cell(tape, x, st, tape.constant(Tensor(Shape{4 * d, d})), b0), DimensionError);
}

TEST_CASE("gaussian log prob closed form") {
  Tape tape;
  const double sigma = 0.7;
  const Var mean = tape.constant(Tensor::vector({0.2, -0.1}));
  const double lp = tape.value(ops::gaussian_log_prob(tape, mean, Tensor::vector({0.2, -0.1}), sigma))[0];
  CHECK(lp == doctest::Approx(-std::log(2.0 * std::numbers::pi * sigma * sigma)).epsilon(1e-12));
}

TEST_CASE("unused parameter gets exactly zero gradient") {
  const Tensor a = Tensor::vector({1, 2}), b = Tensor::vector({3, 4});
  Tensor ga(Shape{2}), gb(Shape{2});
  Tape tape;
  const Var va = tape.parameter(a, &ga);
  tape.parameter(b, &gb);
  tape.backward(ops::sum(tape, ops::mul(tape, va, va)));
  CHECK(ga == Tensor::vector({2, 4}));
  CHECK(gb == Tensor(Shape{2}));
}

TEST_CASE("recording a non-finite value is an error") {
  Tape tape;
  CHECK_THROWS_AS(tape.record(Tensor::vector({std::nan("")}), false, {}), NumericError);
}

TEST_CASE("tape replay is bit-identical") {
  auto run = [] {
    std::mt19937_64 rng(21);
    const Tensor w = random_tensor({4, 6}, rng), x = random_tensor({6}, rng);
    Tensor gw(Shape{4, 6});
    Tape tape;
    const Var y = ops::softmax(tape, ops::linear(tape, tape.parameter(w, &gw), tape.constant(x), Var{}));
    tape.backward(ops::cross_entropy(tape, y, 1));
    return gw;
  };
  CHECK(run() == run());
}

TEST_CASE("grad_check basics") {
  CHECK(grad_check([](Tape& t, Var x) { return ops::sum(t, x); }, Tensor::vector({1, -2, 3})) < 1e-9);
  CHECK_THROWS_AS(grad_check([](Tape& t, Var x) { return ops::relu(t, x); }, Tensor::vector({1, 2})),
                  DimensionError);
  std::mt19937_64 rng(4);
  const Tensor w = random_tensor({5, 4}, rng), x = random_tensor({4}, rng);
  const TapeFunction fn = [](Tape& t, std::span<const Var> in) {
    return ops::cross_entropy(t, ops::softmax(t, ops::linear(t, in[0], in[1], Var{})), 3);
  };
  const std::vector<Tensor> inputs{w, x};
  CHECK(grad_check(fn, inputs).max_rel_error < 1e-4);
}

// Every differentiable op over 100 seeds.
TEST_CASE("op gradients match finite differences over 100 seeds") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const Tensor w = random_tensor({3, 4}, rng), x = random_tensor({4}, rng), y = random_tensor({4}, rng);
    const Tensor img = random_tensor({2, 6, 5}, rng), ker = random_tensor({3, 2, 3, 3}, rng), kb = random_tensor({3}, rng);
    const Tensor lw = random_tensor({12, 7}, rng), lb = random_tensor({12}, rng), lx = random_tensor({4}, rng),
                 lh = random_tensor({3}, rng), lc = random_tensor({3}, rng);
    double worst = 0.0;
    auto check = [&](const TapeFunction& fn, std::vector<Tensor> inputs) {
      worst = std::max(worst, grad_check(fn, inputs).max_rel_error);
    };
    // Projections onto fixed random weights keep every output coordinate in play.
    auto project = [&](Tape& t, Var v) {
      const Tensor& val = t.value(v);
      Tensor p(val.shape());
      std::mt19937_64 prng(seed + 1000);
      for (auto& e : p.data()) e = std::uniform_real_distribution<double>(-1, 1)(prng);
      return ops::sum(t, ops::mul(t, v, t.constant(p)));
    };
    check([&](Tape& t, std::span<const Var> in) { return project(t, ops::linear(t, in[0], in[1], Var{})); }, {w, x});
    check([&](Tape& t, std::span<const Var> in) { return project(t, ops::add(t, in[0], in[1])); }, {x, y});
    check([&](Tape& t, std::span<const Var> in) { return project(t, ops::sub(t, in[0], in[1])); }, {x, y});
    check([&](Tape& t, std::span<const Var> in) { return project(t, ops::mul(t, in[0], in[1])); }, {x, y});
    check([&](Tape& t, std::span<const Var> in) { return project(t, ops::scale(t, in[0], -1.7)); }, {x});
    check([&](Tape& t, std::span<const Var> in) { return project(t, ops::tanh(t, in[0])); }, {x});
    check([&](Tape& t, std::span<const Var> in) { return project(t, ops::sigmoid(t, in[0])); }, {x});
    check([&](Tape& t, std::span<const Var> in) { return project(t, ops::softmax(t, in[0])); }, {x});
    check([&](Tape& t, std::span<const Var> in) { return project(t, ops::relu(t, in[0])); }, {x});
    check([&](Tape& t, std::span<const Var> in) { return ops::cross_entropy(t, ops::softmax(t, in[0]), seed % 4); },
          {x});
    check([&](Tape& t, std::span<const Var> in) { return project(t, ops::conv2d(t, in[0], in[1], in[2], 1, 1)); },
          {img, ker, kb});
    check([&](Tape& t, std::span<const Var> in) { return project(t, ops::conv2d(t, in[0], in[1], 2, 0)); },
          {img, ker});
    check([&](Tape& t, std::span<const Var> in) { return project(t, ops::maxpool2d(t, in[0], 2, 2)); }, {img});
    check([&](Tape& t, std::span<const Var> in) { return project(t, ops::reshape(t, in[0], Shape{2, 2})); }, {x});
    check(
        [&](Tape& t, std::span<const Var> in) {
          return ops::gaussian_log_prob(t, ops::tanh(t, in[0]), Tensor::vector({0.1, -0.3, 0.5, 0.0}), 0.47);
        },
        {x});
    check([&](Tape& t, std::span<const Var> in) { return ops::squared_error(t, ops::sum(t, in[0]), 0.3); }, {x});
    check(
        [&](Tape& t, std::span<const Var> in) {
          const auto s = ops::lstm_cell(t, in[0], {in[1], in[2]}, in[3], in[4]);
          return ops::add(t, project(t, s.h), ops::scale(t, ops::sum(t, s.c), 0.37));
        },
        {lx, lh, lc, lw, lb});
    INFO("seed " << seed);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("adam") {
  SUBCASE("step one moves by lr against the gradient sign") {
    Tensor p = Tensor::scalar(0.5);
    const Tensor g = Tensor::scalar(1.0);
    std::vector<Tensor*> ps{&p};
    std::vector<const Tensor*> gs{&g};
    AdamState st = AdamState::for_params(ps);
    adam_step(ps, gs, st, {.lr = 0.1});
    CHECK(p[0] - 0.5 == doctest::Approx(-0.1).epsilon(1e-9));
  }
  SUBCASE("zero gradient leaves parameters unchanged") {
    Tensor p = Tensor::vector({1, 2});
    const Tensor g(Shape{2});
    std::vector<Tensor*> ps{&p};
    std::vector<const Tensor*> gs{&g};
    AdamState st = AdamState::for_params(ps);
    st.m[0] = Tensor::vector({0.5, -0.5});
    adam_step(ps, gs, st, {.lr = 0.0});
    CHECK(p == Tensor::vector({1, 2}));
    CHECK(std::abs(st.m[0][0]) < 0.5);
  }
  SUBCASE("matches a scalar reference for five steps") {
    Tensor p = Tensor::scalar(1.0);
    Tensor g(Shape{1});
    std::vector<Tensor*> ps{&p};
    std::vector<const Tensor*> gs{&g};
    AdamState st = AdamState::for_params(ps);
    double rp = 1.0, m = 0.0, v = 0.0;
    const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (int k = 1; k <= 5; ++k) {
      const double grad = 2.0 * rp - 0.3 * k;
      g[0] = grad;
      adam_step(ps, gs, st, {.lr = lr});
      m = b1 * m + (1 - b1) * grad;
      v = b2 * v + (1 - b2) * grad * grad;
      rp -= lr * (m / (1 - std::pow(b1, k))) / (std::sqrt(v / (1 - std::pow(b2, k))) + eps);
      CHECK(std::abs(p[0] - rp) < 1e-12);
    }
  }
  SUBCASE("shape mismatch") {
    Tensor p = Tensor::vector({1, 2});
    const Tensor g(Shape{3});
    std::vector<Tensor*> ps{&p};
    std::vector<const Tensor*> gs{&g};
    AdamState st = AdamState::for_params(ps);
    CHECK_THROWS_AS(adam_step(ps, gs, st, {}), DimensionError);
  }
}

TEST_CASE("lr schedule is exact linear interpolation") {
  for (std::size_t k = 0; k <= 10; ++k) {
    CHECK(annealed_lr(0.01, 1e-5, k, 10) == 0.01 + (1e-5 - 0.01) * static_cast<double>(k) / 10.0);
  }
}

TEST_CASE("global norm clipping") {
  Tensor a = Tensor::vector({3, 0}), b = Tensor::vector({4});
  std::vector<Tensor*> gs{&a, &b};
  CHECK(clip_global_norm(gs, 1.0) == doctest::Approx(5.0));
  CHECK(std::sqrt(a.squared_norm() + b.squared_norm()) == doctest::Approx(1.0));
  CHECK(clip_global_norm(gs, 10.0) == doctest::Approx(1.0));
  CHECK(a[0] == doctest::Approx(0.6));
}
