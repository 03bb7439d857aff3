#include "adprog/vit_lora.hpp"

#include <algorithm>
#include <cmath>

#include "adprog/error.hpp"
#include "adprog/ops.hpp"

namespace adprog {

VitConfig VitConfig::paper_scale() {
  VitConfig cfg;
  cfg.blocks = 12;
  cfg.dim = 768;
  cfg.heads = 12;
  cfg.rank = 8;
  cfg.patch = 16;
  cfg.side = 256;
  return cfg;
}

void VitConfig::validate() const {
  if (blocks == 0) throw ConfigError("vit: at least one encoder block is required");
  if (dim == 0 || heads == 0 || dim % heads != 0) {
    throw ConfigError("vit: dim " + std::to_string(dim) + " must be a positive multiple of heads " +
                      std::to_string(heads));
  }
  if (patch == 0 || side == 0 || side % patch != 0) {
    throw ConfigError("vit: input side " + std::to_string(side) + " is not divisible by patch " +
                      std::to_string(patch));
  }
  if (mlp_ratio == 0) throw ConfigError("vit: mlp_ratio must be positive");
  check_lora_rank(dim, dim, rank);
}

void check_lora_rank(std::size_t d_in, std::size_t d_out, std::size_t rank) {
  if (rank == 0 || rank >= std::min(d_in, d_out)) {
    throw ConfigError("lora: rank " + std::to_string(rank) + " must lie in [1, min(d_in, d_out)) = [1, " +
                      std::to_string(std::min(d_in, d_out)) + ")");
  }
}

LoraAdapter::LoraAdapter(std::size_t d_in, std::size_t d_out, std::size_t rank, double init_std, Rng& rng) {
  check_lora_rank(d_in, d_out, rank);
  a_ = normal_tensor({rank, d_in}, init_std, rng, true);
  b_ = Tensor::zeros({d_out, rank}, true);
}

LoraAdapter::LoraAdapter(Tensor a, Tensor b) : a_(std::move(a)), b_(std::move(b)) {
  if (a_.rank() != 2 || b_.rank() != 2 || a_.dim(0) != b_.dim(1)) {
    throw DimensionError("lora: A " + shape_str(a_.shape()) + " and B " + shape_str(b_.shape()) +
                         " do not share a rank");
  }
  check_lora_rank(a_.dim(1), b_.dim(0), a_.dim(0));
}

Tensor lora_linear(const Tensor& x, const Tensor& frozen_w, const LoraAdapter* adapter, double alpha) {
  if (frozen_w.rank() != 2 || x.rank() != 2 || x.dim(1) != frozen_w.dim(1)) {
    throw DimensionError("lora_linear: input " + shape_str(x.shape()) + " does not fit weight " +
                         shape_str(frozen_w.shape()));
  }
  Tensor base = matmul_nt(x, frozen_w);
  if (adapter == nullptr) return base;
  if (adapter->d_in() != frozen_w.dim(1) || adapter->d_out() != frozen_w.dim(0)) {
    throw DimensionError("lora_linear: adapter " + std::to_string(adapter->d_out()) + "x" +
                         std::to_string(adapter->d_in()) + " does not match weight " + shape_str(frozen_w.shape()));
  }
  check_lora_rank(adapter->d_in(), adapter->d_out(), adapter->rank());
  Tensor update = matmul_nt(matmul_nt(x, adapter->a()), adapter->b());
  return add(base, scale(update, alpha));
}

EncoderBlock EncoderBlock::random(const VitConfig& cfg, Rng& rng) {
  const std::size_t d = cfg.dim, hidden = cfg.dim * cfg.mlp_ratio;
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  EncoderBlock b;
  b.w_q = normal_tensor({d, d}, s, rng);
  b.w_k = normal_tensor({d, d}, s, rng);
  b.w_v = normal_tensor({d, d}, s, rng);
  b.w_o = normal_tensor({d, d}, s, rng);
  b.lora_q.emplace(d, d, cfg.rank, cfg.lora_init_std, rng);
  b.lora_k.emplace(d, d, cfg.rank, cfg.lora_init_std, rng);
  b.lora_v.emplace(d, d, cfg.rank, cfg.lora_init_std, rng);
  b.mlp_w1 = normal_tensor({hidden, d}, s, rng);
  b.mlp_b1 = Tensor::zeros({hidden});
  b.mlp_w2 = normal_tensor({d, hidden}, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
  b.mlp_b2 = Tensor::zeros({d});
  b.ln1_gamma = Tensor::full({d}, 1.0);
  b.ln1_beta = Tensor::zeros({d});
  b.ln2_gamma = Tensor::full({d}, 1.0);
  b.ln2_beta = Tensor::zeros({d});
  b.heads = cfg.heads;
  b.lora_alpha = cfg.lora_alpha;
  b.ln_eps = cfg.ln_eps;
  return b;
}

EncoderBlock EncoderBlock::without_adapters() const {
  EncoderBlock copy = *this;
  copy.lora_q.reset();
  copy.lora_k.reset();
  copy.lora_v.reset();
  return copy;
}

void EncoderBlock::append_params(ParamList& out, const std::string& prefix) const {
  const std::string frozen = "encoder.frozen";
  out.push_back({prefix + ".w_q", frozen, w_q});
  out.push_back({prefix + ".w_k", frozen, w_k});
  out.push_back({prefix + ".w_v", frozen, w_v});
  out.push_back({prefix + ".w_o", frozen, w_o});
  const std::pair<const char*, const std::optional<LoraAdapter>*> adapters[] = {
      {"lora_q", &lora_q}, {"lora_k", &lora_k}, {"lora_v", &lora_v}};
  for (const auto& [name, adapter] : adapters) {
    if (!adapter->has_value()) continue;
    out.push_back({prefix + "." + name + ".A", "encoder.lora", (*adapter)->a()});
    out.push_back({prefix + "." + name + ".B", "encoder.lora", (*adapter)->b()});
  }
  out.push_back({prefix + ".mlp_w1", frozen, mlp_w1});
  out.push_back({prefix + ".mlp_b1", frozen, mlp_b1});
  out.push_back({prefix + ".mlp_w2", frozen, mlp_w2});
  out.push_back({prefix + ".mlp_b2", frozen, mlp_b2});
  out.push_back({prefix + ".ln1_gamma", frozen, ln1_gamma});
  out.push_back({prefix + ".ln1_beta", frozen, ln1_beta});
  out.push_back({prefix + ".ln2_gamma", frozen, ln2_gamma});
  out.push_back({prefix + ".ln2_beta", frozen, ln2_beta});
}

Tensor multihead_attention_lora(const Tensor& tokens, const EncoderBlock& block, std::vector<Tensor>* attention) {
  if (tokens.rank() != 2 || tokens.dim(0) == 0) {
    throw InputError("attention: tokens must be a non-empty [T x d] matrix, got " + shape_str(tokens.shape()));
  }
  const std::size_t d = block.dim();
  if (tokens.dim(1) != d || d % block.heads != 0) {
    throw DimensionError("attention: tokens " + shape_str(tokens.shape()) + " do not fit block width " +
                         std::to_string(d) + " with " + std::to_string(block.heads) + " heads");
  }
  const auto adapter = [](const std::optional<LoraAdapter>& a) { return a ? &*a : nullptr; };
  const Tensor q = lora_linear(tokens, block.w_q, adapter(block.lora_q), block.lora_alpha);
  const Tensor k = lora_linear(tokens, block.w_k, adapter(block.lora_k), block.lora_alpha);
  const Tensor v = lora_linear(tokens, block.w_v, adapter(block.lora_v), block.lora_alpha);
  const std::size_t head_dim = d / block.heads;
  const double score_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  if (attention) attention->clear();
  std::vector<Tensor> head_outputs;
  for (std::size_t h = 0; h < block.heads; ++h) {
    const std::size_t lo = h * head_dim, hi = lo + head_dim;
    const Tensor scores = scale(matmul_nt(slice_cols(q, lo, hi), slice_cols(k, lo, hi)), score_scale);
    const Tensor weights = softmax(scores, 1);
    if (attention) attention->push_back(weights);
    head_outputs.push_back(matmul(weights, slice_cols(v, lo, hi)));
  }
  return matmul_nt(concat_cols(head_outputs), block.w_o);
}

Tensor encoder_block_forward(const Tensor& tokens, const EncoderBlock& block) {
  const Tensor attended = add(tokens, multihead_attention_lora(
                                          layer_norm(tokens, block.ln1_gamma, block.ln1_beta, block.ln_eps), block));
  const Tensor normed = layer_norm(attended, block.ln2_gamma, block.ln2_beta, block.ln_eps);
  const Tensor hidden = gelu(add_bias(matmul_nt(normed, block.mlp_w1), block.mlp_b1));
  return add(attended, add_bias(matmul_nt(hidden, block.mlp_w2), block.mlp_b2));
}

Tensor encoder_forward(const Tensor& tokens, std::span<const EncoderBlock> blocks) {
  if (blocks.empty()) throw ConfigError("encoder_forward: at least one block is required");
  Tensor x = tokens;
  for (const EncoderBlock& block : blocks) x = encoder_block_forward(x, block);
  return x;
}

PatchEmbedding PatchEmbedding::random(const VitConfig& cfg, Rng& rng) {
  PatchEmbedding e;
  e.patch = cfg.patch;
  const std::size_t width = 3 * cfg.patch * cfg.patch;
  e.projection = normal_tensor({cfg.dim, width}, 1.0 / std::sqrt(static_cast<double>(width)), rng);
  e.positions = normal_tensor({cfg.tokens(), cfg.dim}, 0.02, rng);
  e.class_token = normal_tensor({cfg.dim}, 0.02, rng);
  return e;
}

void PatchEmbedding::append_params(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".projection", "embedding.frozen", projection});
  out.push_back({prefix + ".positions", "embedding.frozen", positions});
  out.push_back({prefix + ".class_token", "embedding.frozen", class_token});
}

Tensor patchify(const Tensor& image, const PatchEmbedding& embedding) {
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != image.dim(2)) {
    throw DimensionError("patchify: expected a [3 x S x S] image, got " + shape_str(image.shape()));
  }
  const std::size_t side = image.dim(1), p = embedding.patch;
  if (p == 0 || side % p != 0) {
    throw ConfigError("patchify: side " + std::to_string(side) + " is not divisible by patch " + std::to_string(p));
  }
  const std::size_t n = (side / p) * (side / p);
  const std::size_t d = embedding.projection.dim(0);
  if (embedding.positions.dim(0) != n + 1 || embedding.positions.dim(1) != d) {
    throw ConfigError("patchify: positional table " + shape_str(embedding.positions.shape()) + " does not cover " +
                      std::to_string(n + 1) + " tokens");
  }
  const Tensor projected = matmul_nt(extract_patches(image, p), embedding.projection);
  const Tensor tokens = concat_rows({reshape(embedding.class_token, {1, d}), projected});
  return add(tokens, embedding.positions);
}

VitEncoder::VitEncoder(const VitConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  embedding_ = PatchEmbedding::random(cfg_, rng);
  for (std::size_t i = 0; i < cfg_.blocks; ++i) blocks_.push_back(EncoderBlock::random(cfg_, rng));
}

Tensor VitEncoder::forward(const Tensor& image) const { return encoder_forward(patchify(image, embedding_), blocks_); }

void VitEncoder::append_params(ParamList& out) const {
  embedding_.append_params(out, "embedding");
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].append_params(out, "encoder." + std::to_string(i));
}

}  // namespace adprog
