#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "adprog/ops.hpp"
#include "adprog/params.hpp"
#include "adprog/random.hpp"
#include "adprog/vit_lora.hpp"

namespace adprog {

/// Convolutional front end, 1x1 bridge and feature head. The stem is a plain
/// conv + swish stack standing in for EfficientNetV2-S.
struct StemConfig {
  std::vector<std::size_t> stage_channels{8, 16, 32};
  std::vector<std::size_t> strides{2, 2, 2};
  std::size_t kernel = 3;
  Activation activation = Activation::swish;
  std::vector<std::size_t> bridge_channels{16, 8, 3};
  std::size_t bridge_side = 64;
  std::size_t feature_width = 256;
  std::size_t classes = 3;
  bool freeze_stem = false;

  static StemConfig paper_scale();
  void validate() const;
};

class ConvStem {
 public:
  ConvStem(const StemConfig& cfg, Rng& rng);

  // image[3 x H x W] -> [C_s x H' x W']. Throws ConfigError if H or W is
  // below 32 or the stride plan leaves no spatial extent.
  Tensor forward(const Tensor& image) const;
  std::size_t output_channels() const { return cfg_.stage_channels.back(); }
  void append_params(ParamList& out) const;

  std::vector<Tensor>& kernels() { return kernels_; }
  std::vector<Tensor>& biases() { return biases_; }

 private:
  StemConfig cfg_;
  std::vector<Tensor> kernels_;
  std::vector<Tensor> biases_;
};

/// Exactly three 1x1 convolutions down to 3 channels, then bilinear resize
/// to side x side.
class Bridge {
 public:
  Bridge(std::size_t in_channels, const StemConfig& cfg, Rng& rng);
  // Identity 1x1 convolutions over 3 channels.
  static Bridge identity(std::size_t side);

  // When `channel_log` is given it receives the channel count entering the
  // bridge and after each convolution.
  Tensor forward(const Tensor& features, std::vector<std::size_t>* channel_log = nullptr) const;
  std::vector<std::size_t> channel_plan() const;
  void append_params(ParamList& out) const;

 private:
  Bridge() = default;
  std::size_t in_channels_ = 0;
  std::size_t side_ = 0;
  std::vector<Tensor> kernels_;
  std::vector<Tensor> biases_;
};

struct HeadOutput {
  Tensor features;  // [1 x F]
  Tensor logits;    // [1 x classes]
};

/// Class-token row -> dense(F) + swish (the exported feature) -> dense(classes).
class FeatureHead {
 public:
  FeatureHead(std::size_t dim, std::size_t feature_width, std::size_t classes, Rng& rng);

  HeadOutput forward(const Tensor& encoder_out) const;
  void append_params(ParamList& out) const;

  Tensor& feature_bias() { return feature_b_; }

 private:
  Tensor feature_w_, feature_b_, class_w_, class_b_;
};

struct ExtractorConfig {
  StemConfig stem;
  VitConfig vit;
  std::size_t image_side = 64;

  static ExtractorConfig paper_scale();
  void validate() const;
};

/// Stem -> bridge -> patchify -> LoRA encoder -> head. All weights are
/// seeded from a single value so a config plus seed identifies the model
/// before training.
class FeatureExtractor {
 public:
  FeatureExtractor(const ExtractorConfig& cfg, std::uint64_t seed);

  HeadOutput forward(const Tensor& image) const;
  const ExtractorConfig& config() const { return cfg_; }
  ParamList parameters() const;

  const ConvStem& stem() const { return stem_; }
  const Bridge& bridge() const { return bridge_; }
  const VitEncoder& encoder() const { return encoder_; }

 private:
  ExtractorConfig cfg_;
  Rng init_rng_;
  ConvStem stem_;
  Bridge bridge_;
  VitEncoder encoder_;
  FeatureHead head_;
};

}  // namespace adprog
