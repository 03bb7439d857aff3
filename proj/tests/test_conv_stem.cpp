#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "adprog/conv_stem.hpp"
#include "adprog/error.hpp"
#include "adprog/grad_check.hpp"
#include "support.hpp"

using namespace adprog;

TEST_CASE("desk stem on 64x64 gives 32 channels at 8x8") {
  Rng rng = make_rng(1);
  const ConvStem stem(StemConfig{}, rng);
  CHECK(stem.forward(Tensor::zeros({3, 64, 64})).shape() == Shape{32, 8, 8});
}

TEST_CASE("stem rejects inputs below 32x32") {
  Rng rng = make_rng(2);
  const ConvStem stem(StemConfig{}, rng);
  CHECK_THROWS_AS(stem.forward(Tensor::zeros({3, 31, 64})), ConfigError);
  CHECK_NOTHROW(stem.forward(Tensor::zeros({3, 32, 32})));
  CHECK_THROWS_AS(stem.forward(Tensor::zeros({1, 64, 64})), DimensionError);
}

TEST_CASE("bridge goes through exactly three 1x1 convolutions to 3 channels") {
  Rng rng = make_rng(3);
  const StemConfig cfg;
  const Bridge bridge(32, cfg, rng);
  std::vector<std::size_t> log;
  for (std::size_t side : {5, 8, 13}) {
    const Tensor out = bridge.forward(normal_tensor({32, side, side + 2}, 1.0, rng), &log);
    CHECK(out.shape() == Shape{3, 64, 64});
    CHECK(log == std::vector<std::size_t>{32, 16, 8, 3});
  }
  CHECK(bridge.channel_plan() == std::vector<std::size_t>{32, 16, 8, 3});
  CHECK_THROWS_AS(bridge.forward(Tensor::zeros({16, 8, 8})), DimensionError);
  CHECK(Bridge(128, StemConfig::paper_scale(), rng).channel_plan() == std::vector<std::size_t>{128, 64, 16, 3});
}

TEST_CASE("identity bridge only resizes") {
  Rng rng = make_rng(4);
  const Tensor x = normal_tensor({3, 16, 16}, 1.0, rng);
  CHECK(testing::bit_equal(Bridge::identity(16).forward(x).values(), x.values()));
}

TEST_CASE("config validation") {
  StemConfig cfg;
  cfg.bridge_channels = {16, 3};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = StemConfig{};
  cfg.bridge_channels = {16, 8, 4};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = StemConfig{};
  cfg.kernel = 4;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = StemConfig{};
  cfg.strides = {2, 2};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = StemConfig{};
  cfg.feature_width = 128;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  ExtractorConfig ext;
  ext.vit.side = 32;
  CHECK_THROWS_AS(ext.validate(), ConfigError);
}

TEST_CASE("extractor emits a 256-wide feature and 3 logits") {
  const FeatureExtractor model(ExtractorConfig{}, 5);
  Rng rng = make_rng(5);
  const HeadOutput out = model.forward(normal_tensor({3, 64, 64}, 1.0, rng));
  CHECK(out.features.shape() == Shape{1, 256});
  CHECK(out.logits.shape() == Shape{1, 3});
}

TEST_CASE("extractor parameter groups") {
  const FeatureExtractor model(ExtractorConfig{}, 6);
  const ParamReport report = count_trainable_params(model.parameters());
  const ExtractorConfig cfg;
  CHECK(report.trainable_in("encoder.lora") == cfg.vit.blocks * 3 * cfg.vit.rank * 2 * cfg.vit.dim);
  // Stem: 3->8->16->32 with 3x3 kernels and biases.
  CHECK(report.trainable_in("stem") == (8 * 3 * 9 + 8) + (16 * 8 * 9 + 16) + (32 * 16 * 9 + 32));
  CHECK(report.trainable_in("bridge") == (16 * 32 + 16) + (8 * 16 + 8) + (3 * 8 + 3));
  CHECK(report.trainable_in("head") == (256 * 64 + 256) + (3 * 256 + 3));

  ExtractorConfig frozen;
  frozen.stem.freeze_stem = true;
  CHECK(count_trainable_params(FeatureExtractor(frozen, 6).parameters()).trainable_in("stem") == 0);
}

TEST_CASE("same seed builds the same extractor") {
  const FeatureExtractor a(ExtractorConfig{}, 9), b(ExtractorConfig{}, 9), c(ExtractorConfig{}, 10);
  const ParamList pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  bool all_same = true, any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    all_same &= testing::bit_equal(pa[i].tensor.values(), pb[i].tensor.values());
    any_diff |= !testing::bit_equal(pa[i].tensor.values(), pc[i].tensor.values());
  }
  CHECK(all_same);
  CHECK(any_diff);
}

TEST_CASE("end-to-end extractor gradients agree with central differences") {
  ExtractorConfig cfg;
  cfg.stem.stage_channels = {4, 4};
  cfg.stem.strides = {2, 2};
  cfg.stem.bridge_channels = {4, 3, 3};
  cfg.stem.bridge_side = 16;
  cfg.vit = VitConfig{};
  cfg.vit.blocks = 1;
  cfg.vit.dim = 8;
  cfg.vit.heads = 2;
  cfg.vit.rank = 2;
  cfg.vit.patch = 8;
  cfg.vit.side = 16;
  cfg.vit.mlp_ratio = 2;
  cfg.image_side = 32;
  const FeatureExtractor model(cfg, 11);
  Rng rng = make_rng(11);
  const Tensor image = normal_tensor({3, 32, 32}, 1.0, rng);
  const ParamList params = model.parameters();
  std::vector<GradCheckInput> inputs;
  for (const NamedParam& p : params) {
    if (p.tensor.requires_grad()) inputs.push_back({p.name, p.tensor});
  }
  const auto f = [&] {
    const HeadOutput out = model.forward(image);
    return add(sum(out.logits), scale(sum(out.features), 0.1));
  };
  CHECK(grad_check(f, inputs, {1e-6, 24}).max_rel_error < 1e-4);
}
