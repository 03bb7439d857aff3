#include "adprog/conv_stem.hpp"

#include <cmath>

#include "adprog/error.hpp"

namespace adprog {

StemConfig StemConfig::paper_scale() {
  StemConfig cfg;
  cfg.stage_channels = {24, 48, 64, 128};
  cfg.strides = {2, 2, 2, 2};
  cfg.bridge_channels = {64, 16, 3};
  cfg.bridge_side = 256;
  return cfg;
}

void StemConfig::validate() const {
  if (stage_channels.empty() || stage_channels.size() != strides.size()) {
    throw ConfigError("stem: stage_channels and strides must be non-empty and of equal length");
  }
  for (std::size_t s : strides)
    if (s == 0) throw ConfigError("stem: strides must be positive");
  for (std::size_t c : stage_channels)
    if (c == 0) throw ConfigError("stem: stage channel widths must be positive");
  if (kernel == 0 || kernel % 2 == 0) throw ConfigError("stem: kernel must be odd");
  if (activation == Activation::softmax) throw ConfigError("stem: softmax is not an elementwise activation");
  if (bridge_channels.size() != 3 || bridge_channels.back() != 3) {
    throw ConfigError("stem: the bridge has exactly three 1x1 convolutions ending in 3 channels");
  }
  std::size_t prev = stage_channels.back();
  for (std::size_t c : bridge_channels) {
    if (c == 0 || c > prev) throw ConfigError("stem: bridge channel counts must be non-increasing");
    prev = c;
  }
  if (bridge_side == 0) throw ConfigError("stem: bridge side must be positive");
  if (feature_width != 256) throw ConfigError("stem: the feature head width is fixed at 256");
  if (classes == 0) throw ConfigError("stem: class count must be positive");
}

ConvStem::ConvStem(const StemConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  std::size_t in = 3;
  for (std::size_t out : cfg_.stage_channels) {
    const double fan_in = static_cast<double>(in * cfg_.kernel * cfg_.kernel);
    kernels_.push_back(normal_tensor({out, in, cfg_.kernel, cfg_.kernel}, std::sqrt(2.0 / fan_in), rng,
                                     !cfg_.freeze_stem));
    biases_.push_back(Tensor::zeros({out}, !cfg_.freeze_stem));
    in = out;
  }
}

Tensor ConvStem::forward(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("stem: expected a [3 x H x W] image, got " + shape_str(image.shape()));
  }
  if (image.dim(1) < 32 || image.dim(2) < 32) {
    throw ConfigError("stem: input " + shape_str(image.shape()) + " is below the 32x32 minimum");
  }
  std::size_t h = image.dim(1), w = image.dim(2);
  const std::size_t pad = cfg_.kernel / 2;
  for (std::size_t s : cfg_.strides) {
    if (h + 2 * pad < cfg_.kernel || w + 2 * pad < cfg_.kernel) {
      throw ConfigError("stem: input " + shape_str(image.shape()) + " is too small for the stride plan");
    }
    h = (h + 2 * pad - cfg_.kernel) / s + 1;
    w = (w + 2 * pad - cfg_.kernel) / s + 1;
  }
  Tensor x = image;
  for (std::size_t i = 0; i < kernels_.size(); ++i) {
    x = activate(add_channel_bias(conv2d(x, kernels_[i], cfg_.strides[i], pad), biases_[i]), cfg_.activation);
  }
  return x;
}

void ConvStem::append_params(ParamList& out) const {
  for (std::size_t i = 0; i < kernels_.size(); ++i) {
    out.push_back({"stem." + std::to_string(i) + ".kernel", "stem", kernels_[i]});
    out.push_back({"stem." + std::to_string(i) + ".bias", "stem", biases_[i]});
  }
}

Bridge::Bridge(std::size_t in_channels, const StemConfig& cfg, Rng& rng)
    : in_channels_(in_channels), side_(cfg.bridge_side) {
  std::size_t in = in_channels;
  for (std::size_t out : cfg.bridge_channels) {
    kernels_.push_back(normal_tensor({out, in, 1, 1}, 1.0 / std::sqrt(static_cast<double>(in)), rng, true));
    biases_.push_back(Tensor::zeros({out}, true));
    in = out;
  }
}

Bridge Bridge::identity(std::size_t side) {
  Bridge b;
  b.in_channels_ = 3;
  b.side_ = side;
  for (int i = 0; i < 3; ++i) {
    std::vector<double> eye(9, 0.0);
    eye[0] = eye[4] = eye[8] = 1.0;
    b.kernels_.emplace_back(Shape{3, 3, 1, 1}, eye, true);
    b.biases_.push_back(Tensor::zeros({3}, true));
  }
  return b;
}

Tensor Bridge::forward(const Tensor& features, std::vector<std::size_t>* channel_log) const {
  if (features.rank() != 3 || features.dim(0) != in_channels_) {
    throw DimensionError("bridge: expected " + std::to_string(in_channels_) + " input channels, got " +
                         shape_str(features.shape()));
  }
  if (channel_log) channel_log->assign(1, features.dim(0));
  Tensor x = features;
  for (std::size_t i = 0; i < kernels_.size(); ++i) {
    x = add_channel_bias(conv2d(x, kernels_[i], 1, 0), biases_[i]);
    if (channel_log) channel_log->push_back(x.dim(0));
  }
  return bilinear_resize(x, side_, side_);
}

std::vector<std::size_t> Bridge::channel_plan() const {
  std::vector<std::size_t> plan{in_channels_};
  for (const Tensor& k : kernels_) plan.push_back(k.dim(0));
  return plan;
}

void Bridge::append_params(ParamList& out) const {
  for (std::size_t i = 0; i < kernels_.size(); ++i) {
    out.push_back({"bridge." + std::to_string(i) + ".kernel", "bridge", kernels_[i]});
    out.push_back({"bridge." + std::to_string(i) + ".bias", "bridge", biases_[i]});
  }
}

FeatureHead::FeatureHead(std::size_t dim, std::size_t feature_width, std::size_t classes, Rng& rng) {
  feature_w_ = normal_tensor({feature_width, dim}, 1.0 / std::sqrt(static_cast<double>(dim)), rng, true);
  feature_b_ = Tensor::zeros({feature_width}, true);
  class_w_ = normal_tensor({classes, feature_width}, 1.0 / std::sqrt(static_cast<double>(feature_width)), rng, true);
  class_b_ = Tensor::zeros({classes}, true);
}

HeadOutput FeatureHead::forward(const Tensor& encoder_out) const {
  if (encoder_out.rank() != 2 || encoder_out.dim(1) != feature_w_.dim(1)) {
    throw DimensionError("feature head: encoder output " + shape_str(encoder_out.shape()) + " does not have width " +
                         std::to_string(feature_w_.dim(1)));
  }
  const Tensor cls = slice_rows(encoder_out, 0, 1);
  Tensor features = swish(add_bias(matmul_nt(cls, feature_w_), feature_b_));
  Tensor logits = add_bias(matmul_nt(features, class_w_), class_b_);
  return {std::move(features), std::move(logits)};
}

void FeatureHead::append_params(ParamList& out) const {
  out.push_back({"head.feature_w", "head", feature_w_});
  out.push_back({"head.feature_b", "head", feature_b_});
  out.push_back({"head.class_w", "head", class_w_});
  out.push_back({"head.class_b", "head", class_b_});
}

ExtractorConfig ExtractorConfig::paper_scale() {
  ExtractorConfig cfg;
  cfg.stem = StemConfig::paper_scale();
  cfg.vit = VitConfig::paper_scale();
  cfg.image_side = 224;
  return cfg;
}

void ExtractorConfig::validate() const {
  stem.validate();
  vit.validate();
  if (stem.bridge_side != vit.side) {
    throw ConfigError("extractor: bridge side " + std::to_string(stem.bridge_side) + " must equal encoder input side " +
                      std::to_string(vit.side));
  }
  if (image_side < 32) throw ConfigError("extractor: image side must be at least 32");
}

namespace {

const ExtractorConfig& validated(const ExtractorConfig& cfg) {
  cfg.validate();
  return cfg;
}

}  // namespace

FeatureExtractor::FeatureExtractor(const ExtractorConfig& cfg, std::uint64_t seed)
    : cfg_(validated(cfg)),
      init_rng_(make_rng(seed, {0x45585452})),
      stem_(cfg_.stem, init_rng_),
      bridge_(stem_.output_channels(), cfg_.stem, init_rng_),
      encoder_(cfg_.vit, init_rng_),
      head_(cfg_.vit.dim, cfg_.stem.feature_width, cfg_.stem.classes, init_rng_) {}

HeadOutput FeatureExtractor::forward(const Tensor& image) const {
  return head_.forward(encoder_.forward(bridge_.forward(stem_.forward(image))));
}

ParamList FeatureExtractor::parameters() const {
  ParamList out;
  stem_.append_params(out);
  bridge_.append_params(out);
  encoder_.append_params(out);
  head_.append_params(out);
  return out;
}

}  // namespace adprog
