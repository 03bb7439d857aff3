#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "adprog/error.hpp"
#include "adprog/grad_check.hpp"
#include "adprog/ops.hpp"
#include "support.hpp"

using namespace adprog;
using testing::max_abs_diff;

namespace {

// Every op below is checked as sum(op(inputs) * fixed weights) so that each
// output entry gets a distinct upstream gradient.
Tensor weighted(const Tensor& y, std::uint64_t seed) {
  Rng rng = make_rng(seed, {99});
  return sum(mul(y, normal_tensor(y.shape(), 1.0, rng)));
}

double check(const std::function<Tensor()>& f, const std::vector<GradCheckInput>& params) {
  return grad_check(f, params).max_rel_error;
}

}  // namespace

TEST_CASE("tensor construction validates the value count") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
  const Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == 6);
  CHECK(t.at(1, 2) == 6.0);
  CHECK(shape_str(t.shape()) == "[2x3]");
}

TEST_CASE("only leaves can be written in place") {
  Tensor a = Tensor::full({2}, 1.0, true);
  Tensor b = scale(a, 2.0);
  CHECK_THROWS_AS(b.mutable_values(), InputError);
  a.mutable_values()[0] = 5.0;
  CHECK(a.at(0) == 5.0);
}

TEST_CASE("backward requires a scalar and accumulates into leaves") {
  Tensor x({3}, {1.0, 2.0, 3.0}, true);
  CHECK_THROWS_AS(scale(x, 2.0).backward(), DimensionError);
  sum(mul(x, x)).backward();
  CHECK(testing::to_vec(Tensor({3}, {x.grad().begin(), x.grad().end()})) == std::vector<double>{2.0, 4.0, 6.0});
  sum(x).backward();
  CHECK(x.grad()[0] == doctest::Approx(3.0));
  x.zero_grad();
  CHECK_FALSE(x.has_grad());
}

TEST_CASE("a node used twice receives both contributions") {
  Tensor x = Tensor::scalar(3.0, true);
  Tensor y = mul(x, x);
  sum(add(y, y)).backward();
  CHECK(x.grad()[0] == doctest::Approx(12.0));
}

TEST_CASE("graphs without trainable inputs record nothing") {
  Tensor a = Tensor::full({2, 2}, 1.0);
  Tensor b = matmul(a, a);
  CHECK(b.is_leaf());
  CHECK_FALSE(b.requires_grad());
  CHECK(Tape::record(sum(b)).size() == 0);
}

TEST_CASE("tape order is topological") {
  Tensor x = Tensor::full({2}, 1.0, true);
  Tensor h = sigmoid(x);
  Tensor loss = sum(add(h, mul(h, x)));
  const Tape tape = Tape::record(loss);
  const auto& order = tape.order();
  const auto pos = [&](const Tensor& t) {
    return std::find(order.begin(), order.end(), t.id()) - order.begin();
  };
  CHECK(pos(h) < pos(loss));
}

TEST_CASE("matmul matches a naive triple loop bit for bit") {
  Rng rng = make_rng(1);
  const Tensor a = normal_tensor({5, 7}, 1.0, rng);
  const Tensor b = normal_tensor({7, 4}, 1.0, rng);
  std::vector<double> expected(20, 0.0);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 7; ++k) acc += a.at(i, k) * b.at(k, j);
      expected[i * 4 + j] = acc;
    }
  CHECK(testing::bit_equal(matmul(a, b).values(), expected));
  CHECK(testing::bit_equal(matmul_nt(a, transpose(b)).values(), expected));
  CHECK_THROWS_AS(matmul(a, a), DimensionError);
}

TEST_CASE("shape ops move values where expected") {
  const Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(testing::to_vec(transpose(a)) == std::vector<double>{1, 4, 2, 5, 3, 6});
  CHECK(testing::to_vec(slice_cols(a, 1, 3)) == std::vector<double>{2, 3, 5, 6});
  CHECK(testing::to_vec(slice_rows(a, 1, 2)) == std::vector<double>{4, 5, 6});
  CHECK(testing::to_vec(concat_cols({a, slice_cols(a, 0, 1)})) == std::vector<double>{1, 2, 3, 1, 4, 5, 6, 4});
  CHECK(concat_rows({a, a}).dim(0) == 4);
  CHECK_THROWS_AS(reshape(a, {4}), DimensionError);
  CHECK_THROWS_AS(slice_cols(a, 2, 4), DimensionError);
}

TEST_CASE("activations") {
  const Tensor x({1, 4}, {-2.0, -0.5, 0.0, 3.0});
  CHECK(sigmoid(x).at(2) == 0.5);
  CHECK(swish(x).at(3) == doctest::Approx(3.0 / (1.0 + std::exp(-3.0))));
  CHECK(gelu(x).at(2) == 0.0);
  const Tensor p = softmax(x, 1);
  double total = 0.0;
  for (double v : p.values()) total += v;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(activate(x, Activation::softmax), ConfigError);
  CHECK_THROWS_AS(parse_activation("relu6"), ConfigError);
  CHECK(parse_activation("swish") == Activation::swish);
  CHECK(activation_name(Activation::gelu) == "gelu");
}

TEST_CASE("sigmoid stays finite for large magnitudes") {
  const Tensor s = sigmoid(Tensor({2}, {-800.0, 800.0}));
  CHECK(s.at(0) == 0.0);
  CHECK(s.at(1) == 1.0);
}

TEST_CASE("softmax along axis 0 normalizes columns") {
  const Tensor x({2, 2}, {1.0, 2.0, 3.0, 5.0});
  const Tensor p = softmax(x, 0);
  CHECK(p.at(0, 0) + p.at(1, 0) == doctest::Approx(1.0));
  CHECK(p.at(0, 1) + p.at(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("dropout") {
  Rng rng = make_rng(5);
  const Tensor x = Tensor::full({1, 10000}, 1.0);
  CHECK(testing::bit_equal(dropout(x, 0.5, false, rng).values(), x.values()));
  const Tensor y = dropout(x, 0.5, true, rng);
  double total = 0.0;
  std::size_t zeros = 0;
  for (double v : y.values()) {
    total += v;
    zeros += v == 0.0;
    CHECK((v == 0.0 || v == 2.0));
  }
  CHECK(total / 10000.0 == doctest::Approx(1.0).epsilon(0.05));
  CHECK(zeros > 4500);
  CHECK_THROWS_AS(dropout(x, 1.0, true, rng), ConfigError);
  CHECK_THROWS_AS(dropout(x, -0.1, true, rng), ConfigError);
}

TEST_CASE("conv2d matches a direct loop") {
  Rng rng = make_rng(2);
  const Tensor in = normal_tensor({2, 7, 6}, 1.0, rng);
  const Tensor k = normal_tensor({3, 2, 3, 3}, 1.0, rng);
  const std::size_t stride = 2, pad = 1;
  const Tensor out = conv2d(in, k, stride, pad);
  REQUIRE(out.shape() == Shape{3, 4, 3});
  double worst = 0.0;
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 3; ++x) {
        double acc = 0.0;
        for (std::size_t c = 0; c < 2; ++c)
          for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) {
              const long yy = static_cast<long>(y * stride + i) - static_cast<long>(pad);
              const long xx = static_cast<long>(x * stride + j) - static_cast<long>(pad);
              if (yy < 0 || xx < 0 || yy >= 7 || xx >= 6) continue;
              acc += in.values()[c * 42 + static_cast<std::size_t>(yy) * 6 + static_cast<std::size_t>(xx)] *
                     k.values()[((o * 2 + c) * 3 + i) * 3 + j];
            }
        worst = std::max(worst, std::abs(acc - out.values()[(o * 4 + y) * 3 + x]));
      }
  CHECK(worst < 1e-12);
}

TEST_CASE("bilinear resize is corner aligned") {
  const Tensor in({1, 2, 2}, {0.0, 1.0, 2.0, 3.0});
  const Tensor up = bilinear_resize(in, 3, 3);
  CHECK(up.values()[0] == 0.0);
  CHECK(up.values()[8] == 3.0);
  CHECK(up.values()[4] == doctest::Approx(1.5));
  // A single output sample reads the input center.
  CHECK(bilinear_resize(in, 1, 1).item() == doctest::Approx(1.5));
  CHECK(testing::bit_equal(bilinear_resize(in, 2, 2).values(), in.values()));
}

TEST_CASE("layer norm standardizes each row") {
  Rng rng = make_rng(3);
  const Tensor x = normal_tensor({4, 16}, 3.0, rng);
  const Tensor y = layer_norm(x, Tensor::full({16}, 1.0), Tensor::zeros({16}));
  for (std::size_t r = 0; r < 4; ++r) {
    double m = 0.0, v = 0.0;
    for (std::size_t c = 0; c < 16; ++c) m += y.at(r, c);
    m /= 16.0;
    for (std::size_t c = 0; c < 16; ++c) v += (y.at(r, c) - m) * (y.at(r, c) - m);
    CHECK(std::abs(m) < 1e-12);
    CHECK(v / 16.0 == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("extract_patches orders patches row-major and flattens channel-major") {
  std::vector<double> v(2 * 4 * 4);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  const Tensor p = extract_patches(Tensor({2, 4, 4}, v), 2);
  REQUIRE(p.shape() == Shape{4, 8});
  // Patch 1 is the top-right 2x2 block: channel 0 then channel 1.
  CHECK(testing::to_vec(slice_rows(p, 1, 2)) == std::vector<double>{2, 3, 6, 7, 18, 19, 22, 23});
  CHECK_THROWS_AS(extract_patches(Tensor({2, 4, 4}, v), 3), ConfigError);
}

TEST_CASE("gradients of every op agree with central differences") {
  for (std::uint64_t trial = 0; trial < 3; ++trial) {
    Rng rng = make_rng(100 + trial);
    Tensor a = normal_tensor({3, 4}, 1.0, rng, true);
    Tensor b = normal_tensor({3, 4}, 1.0, rng, true);
    Tensor w = normal_tensor({4, 5}, 1.0, rng, true);
    Tensor bias = normal_tensor({4}, 1.0, rng, true);
    CHECK(check([&] { return weighted(add(a, b), trial); }, {{"a", a}, {"b", b}}) < 1e-6);
    CHECK(check([&] { return weighted(sub(a, b), trial); }, {{"a", a}, {"b", b}}) < 1e-6);
    CHECK(check([&] { return weighted(mul(a, b), trial); }, {{"a", a}, {"b", b}}) < 1e-6);
    CHECK(check([&] { return weighted(add_bias(scale(a, 1.5), bias), trial); }, {{"a", a}, {"bias", bias}}) < 1e-6);
    CHECK(check([&] { return weighted(matmul(a, w), trial); }, {{"a", a}, {"w", w}}) < 1e-6);
    CHECK(check([&] { return weighted(matmul_nt(a, b), trial); }, {{"a", a}, {"b", b}}) < 1e-6);
    CHECK(check([&] { return weighted(transpose(a), trial); }, {{"a", a}}) < 1e-6);
    CHECK(check([&] { return weighted(concat_cols({a, b}), trial); }, {{"a", a}, {"b", b}}) < 1e-6);
    CHECK(check([&] { return weighted(concat_rows({a, b}), trial); }, {{"a", a}, {"b", b}}) < 1e-6);
    CHECK(check([&] { return weighted(slice_rows(slice_cols(a, 1, 3), 1, 3), trial); }, {{"a", a}}) < 1e-6);
    CHECK(check([&] { return mean(mul(a, a)); }, {{"a", a}}) < 1e-6);
    for (Activation act : {Activation::sigmoid, Activation::tanh, Activation::swish, Activation::gelu}) {
      CHECK(check([&] { return weighted(activate(a, act), trial); }, {{"a", a}}) < 1e-6);
    }
    CHECK(check([&] { return weighted(softmax(a, 1), trial); }, {{"a", a}}) < 1e-6);
    CHECK(check([&] { return weighted(softmax(a, 0), trial); }, {{"a", a}}) < 1e-6);
    Tensor gamma = normal_tensor({4}, 1.0, rng, true);
    CHECK(check([&] { return weighted(layer_norm(a, gamma, bias), trial); },
                {{"a", a}, {"gamma", gamma}, {"beta", bias}}) < 1e-5);
  }
}

TEST_CASE("spatial op gradients agree with central differences") {
  Rng rng = make_rng(7);
  Tensor img = normal_tensor({2, 6, 6}, 1.0, rng, true);
  Tensor k = normal_tensor({3, 2, 3, 3}, 0.5, rng, true);
  Tensor cb = normal_tensor({3}, 1.0, rng, true);
  CHECK(check([&] { return weighted(add_channel_bias(conv2d(img, k, 2, 1), cb), 1); },
              {{"img", img}, {"k", k}, {"cb", cb}}) < 1e-6);
  CHECK(check([&] { return weighted(bilinear_resize(img, 9, 4), 2); }, {{"img", img}}) < 1e-6);
  CHECK(check([&] { return weighted(extract_patches(img, 3), 3); }, {{"img", img}}) < 1e-6);
  Rng drop_rng = make_rng(8);
  CHECK(check(
            [&] {
              Rng r = drop_rng;
              return weighted(dropout(img, 0.3, true, r), 4);
            },
            {{"img", img}}) < 1e-6);
}

TEST_CASE("grad_check guards its own inputs") {
  Tensor x = Tensor::full({2}, 1.0, true);
  CHECK_THROWS_AS(grad_check([&] { return sum(x); }, {{"x", x}}, {1e-2, 0}), ConfigError);
  CHECK_THROWS_AS(grad_check([&] { return sum(x); }, {{"x", x}}, {1e-9, 0}), ConfigError);
  // Finite at the start point, infinite after a positive nudge.
  Tensor y = Tensor::full({1}, 0.0, true);
  const auto cliff = [&] { return add(sum(y), Tensor::scalar(y.at(0) > 0.0 ? INFINITY : 0.0)); };
  CHECK_THROWS_AS(grad_check(cliff, {{"y", y}}), OracleFailure);
}

TEST_CASE("grad_check can subsample entries") {
  Rng rng = make_rng(9);
  Tensor a = normal_tensor({10, 10}, 1.0, rng, true);
  const GradCheckReport report = grad_check([&] { return sum(mul(a, a)); }, {{"a", a}}, {1e-6, 7});
  CHECK(report.entries_checked == 7);
}
