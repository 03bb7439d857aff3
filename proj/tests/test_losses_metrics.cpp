#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "adprog/error.hpp"
#include "adprog/grad_check.hpp"
#include "adprog/losses.hpp"
#include "adprog/metrics.hpp"
#include "adprog/ops.hpp"
#include "support.hpp"

using namespace adprog;

namespace {

// A random distribution over `classes` plus a random one-hot target.
std::pair<std::vector<double>, std::vector<double>> random_case(std::size_t classes, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.01, 1.0);
  std::vector<double> p(classes), y(classes, 0.0);
  double z = 0.0;
  for (double& v : p) z += (v = unit(rng));
  for (double& v : p) v /= z;
  y[std::uniform_int_distribution<std::size_t>(0, classes - 1)(rng)] = 1.0;
  return {p, y};
}

}  // namespace

TEST_CASE("cross entropy of a confident correct prediction") {
  const std::vector<double> p{0.1, 0.9}, y{0.0, 1.0};
  // -ln 0.9 = 0.105360515657826...
  CHECK(cross_entropy(p, y) == doctest::Approx(0.1053605156578263).epsilon(1e-15));
}

TEST_CASE("focal loss at p=0.9, gamma=2") {
  const std::vector<double> p{0.1, 0.9}, y{0.0, 1.0};
  const double fl = focal_loss(p, y);
  CHECK(std::abs(fl - 1.0536e-3) <= 1e-7);
  CHECK(fl == doctest::Approx(0.01 * 0.1053605156578263).epsilon(1e-13));
}

TEST_CASE("focal loss of a certain prediction is zero") {
  CHECK(focal_loss(std::vector<double>{0.0, 1.0}, std::vector<double>{0.0, 1.0}) == 0.0);
}

TEST_CASE("focal with gamma 0 and alpha 1 equals cross entropy on 1000 cases") {
  Rng rng = make_rng(1);
  FocalLossConfig cfg;
  cfg.gamma = 0.0;
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto [p, y] = random_case(2 + i % 4, rng);
    worst = std::max(worst, std::abs(focal_loss(p, y, cfg) - cross_entropy(p, y)));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("focal loss never exceeds cross entropy when gamma > 0") {
  Rng rng = make_rng(2);
  for (int i = 0; i < 500; ++i) {
    const auto [p, y] = random_case(3, rng);
    FocalLossConfig cfg;
    cfg.gamma = 0.5 + (i % 4);
    CHECK(focal_loss(p, y, cfg) <= cross_entropy(p, y));
  }
}

TEST_CASE("per-class alpha scales each row by its true class") {
  const Tensor p({2, 2}, {0.3, 0.7, 0.6, 0.4});
  const Tensor y({2, 2}, {0.0, 1.0, 1.0, 0.0});
  FocalLossConfig cfg;
  cfg.alpha = {0.25, 2.0};
  cfg.gamma = 1.0;
  const double expected = -(2.0 * 0.3 * std::log(0.7) + 0.25 * 0.4 * std::log(0.6)) / 2.0;
  CHECK(focal_loss(p, y, cfg).item() == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("bce") {
  CHECK(bce_loss(0.8, 1) == doctest::Approx(-std::log(0.8)));
  CHECK(bce_loss(0.8, 0) == doctest::Approx(-std::log(0.2)));
  CHECK(std::isfinite(bce_loss(0.0, 1)));
  CHECK(bce_loss(0.0, 1) == doctest::Approx(-std::log(kProbabilityFloor)));
  CHECK_THROWS_AS(bce_loss(0.5, 2), InputError);
  CHECK_THROWS_AS(bce_loss(1.5, 1), InputError);
}

TEST_CASE("a zero probability on the true class stays finite") {
  const std::vector<double> p{1.0, 0.0}, y{0.0, 1.0};
  CHECK(cross_entropy(p, y) == doctest::Approx(-std::log(kProbabilityFloor)));
  CHECK(std::isfinite(focal_loss(p, y)));
}

TEST_CASE("loss input validation") {
  const std::vector<double> y{0.0, 1.0};
  CHECK_THROWS_AS(cross_entropy(std::vector<double>{0.5, 0.6}, y), InputError);
  CHECK_THROWS_AS(cross_entropy(std::vector<double>{0.5, 0.5}, std::vector<double>{0.5, 0.5}), InputError);
  CHECK_THROWS_AS(cross_entropy(std::vector<double>{0.5, 0.5, 0.0}, y), DimensionError);
  FocalLossConfig bad;
  bad.gamma = -1.0;
  CHECK_THROWS_AS(focal_loss(std::vector<double>{0.5, 0.5}, y, bad), ConfigError);
  bad = FocalLossConfig{};
  bad.alpha = {1.0, 1.0, 1.0};
  CHECK_THROWS_AS(focal_loss(std::vector<double>{0.5, 0.5}, y, bad), ConfigError);
  const int labels[] = {0, 3};
  CHECK_THROWS_AS(one_hot(labels, 3), InputError);
}

TEST_CASE("loss gradients through softmax agree with central differences") {
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    Rng rng = make_rng(10 + trial);
    Tensor logits = normal_tensor({4, 3}, 1.5, rng, true);
    const int labels[] = {0, 2, 1, 2};
    const Tensor y = one_hot(labels, 3);
    FocalLossConfig cfg;
    cfg.alpha = {0.5, 1.0, 2.0};
    CHECK(grad_check([&] { return cross_entropy(softmax(logits, 1), y); }, {{"z", logits}}).max_rel_error <= 1e-5);
    CHECK(grad_check([&] { return focal_loss(softmax(logits, 1), y, cfg); }, {{"z", logits}}).max_rel_error <= 1e-5);
    Tensor z1 = normal_tensor({4, 1}, 1.5, rng, true);
    const int bin[] = {0, 1, 1, 0};
    CHECK(grad_check([&] { return bce_loss(sigmoid(z1), bin); }, {{"z", z1}}).max_rel_error <= 1e-5);
  }
}

TEST_CASE("metrics worked example") {
  const ClassificationMetrics m = metrics_from_confusion({8, 9, 2, 1});
  CHECK(m.accuracy == doctest::Approx(0.85).epsilon(1e-15));
  CHECK(*m.precision == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(*m.recall == doctest::Approx(8.0 / 9.0).epsilon(1e-15));
  CHECK(*m.f1 == doctest::Approx(2 * 0.8 * (8.0 / 9.0) / (0.8 + 8.0 / 9.0)).epsilon(1e-15));
  CHECK(format_metric(m.f1, 4) == "0.8421");
  CHECK(format_metric(m.recall, 4) == "0.8889");
}

TEST_CASE("confusion counts from predictions") {
  const int pred[] = {1, 1, 0, 0, 1, 0};
  const int truth[] = {1, 0, 0, 1, 1, 0};
  const ClassificationMetrics m = confusion_and_metrics(pred, truth);
  CHECK(m.confusion.tp == 2);
  CHECK(m.confusion.fp == 1);
  CHECK(m.confusion.fn == 1);
  CHECK(m.confusion.tn == 2);
  CHECK(m.confusion.total() == 6);
}

TEST_CASE("all correct gives 1 everywhere") {
  const int v[] = {1, 0, 1, 1};
  const ClassificationMetrics m = confusion_and_metrics(v, v);
  CHECK(m.accuracy == 1.0);
  CHECK(*m.precision == 1.0);
  CHECK(*m.recall == 1.0);
  CHECK(*m.f1 == 1.0);
}

TEST_CASE("zero denominators are undefined rather than NaN") {
  const int pred[] = {0, 0, 0};
  const int truth[] = {0, 0, 0};
  const ClassificationMetrics m = confusion_and_metrics(pred, truth);
  CHECK(m.accuracy == 1.0);
  CHECK_FALSE(m.precision.has_value());
  CHECK_FALSE(m.recall.has_value());
  CHECK_FALSE(m.f1.has_value());
  CHECK(format_metric(m.precision) == "undefined");

  const int all_neg_pred[] = {0, 0};
  const int all_pos_truth[] = {1, 1};
  const ClassificationMetrics n = confusion_and_metrics(all_neg_pred, all_pos_truth);
  CHECK_FALSE(n.precision.has_value());
  CHECK(*n.recall == 0.0);
  CHECK_FALSE(n.f1.has_value());
}

TEST_CASE("metric input validation") {
  const int a[] = {0, 1};
  const int b[] = {0};
  const int c[] = {0, 2};
  CHECK_THROWS_AS(confusion_and_metrics(a, b), InputError);
  CHECK_THROWS_AS(confusion_and_metrics(std::span<const int>{}, std::span<const int>{}), InputError);
  CHECK_THROWS_AS(confusion_and_metrics(a, c), InputError);
}

TEST_CASE("the reported headline profile is self-consistent") {
  // 95.05 / 93.98 / 96.66 / 95.30 percent.
  const double precision = 0.9398, recall = 0.9666;
  const double f1 = 2 * precision * recall / (precision + recall);
  CHECK(std::abs(f1 * 100 - 95.30) < 0.005);
}

TEST_CASE("confusion matrices add") {
  ConfusionMatrix a{1, 2, 3, 4};
  a += ConfusionMatrix{1, 1, 1, 1};
  CHECK(a.tp == 2);
  CHECK(a.fn == 5);
  CHECK(a.total() == 14);
}
