#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adprog/params.hpp"
#include "adprog/random.hpp"
#include "adprog/tensor.hpp"

namespace adprog {

/// Transformer encoder geometry. Defaults are the desk-scale configuration;
/// paper_scale() gives the ViT-Base layout over 256x256 inputs.
struct VitConfig {
  std::size_t blocks = 2;
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t rank = 8;
  std::size_t patch = 16;
  std::size_t side = 64;
  std::size_t mlp_ratio = 4;
  double lora_alpha = 1.0;
  double lora_init_std = 0.02;
  double ln_eps = 1e-6;

  static VitConfig paper_scale();
  void validate() const;
  std::size_t patches() const { return (side / patch) * (side / patch); }
  std::size_t tokens() const { return patches() + 1; }
};

/// Trainable low-rank update B.A attached to one frozen projection.
/// A is [rank x d_in], B is [d_out x rank]; B starts at zero so a fresh
/// adapter contributes nothing.
class LoraAdapter {
 public:
  LoraAdapter(std::size_t d_in, std::size_t d_out, std::size_t rank, double init_std, Rng& rng);
  LoraAdapter(Tensor a, Tensor b);

  std::size_t rank() const { return a_.dim(0); }
  std::size_t d_in() const { return a_.dim(1); }
  std::size_t d_out() const { return b_.dim(0); }
  std::size_t trainable_count() const { return rank() * (d_in() + d_out()); }

  const Tensor& a() const { return a_; }
  const Tensor& b() const { return b_; }

 private:
  Tensor a_;
  Tensor b_;
};

// Throws ConfigError when rank is zero or not below min(d_in, d_out).
void check_lora_rank(std::size_t d_in, std::size_t d_out, std::size_t rank);

/// x.W^T + alpha.(x.A^T).B^T. W is [d_out x d_in] and stays frozen; with no
/// adapter this is the plain frozen projection.
Tensor lora_linear(const Tensor& x, const Tensor& frozen_w, const LoraAdapter* adapter, double alpha);

struct EncoderBlock {
  Tensor w_q, w_k, w_v, w_o;
  std::optional<LoraAdapter> lora_q, lora_k, lora_v;
  Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
  Tensor ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
  std::size_t heads = 1;
  double lora_alpha = 1.0;
  double ln_eps = 1e-6;

  // Frozen weights drawn from a seeded Gaussian (fan-in scaled); adapters on
  // Q, K and V with the LoRA initialization.
  static EncoderBlock random(const VitConfig& cfg, Rng& rng);

  EncoderBlock without_adapters() const;
  std::size_t dim() const { return w_q.dim(0); }
  void append_params(ParamList& out, const std::string& prefix) const;
};

/// Scaled dot-product attention per head with softmax over keys, using the
/// LoRA-adapted Q, K, V projections and the frozen output projection.
/// When `attention` is given it receives one [T x T] weight matrix per head.
Tensor multihead_attention_lora(const Tensor& tokens, const EncoderBlock& block,
                                std::vector<Tensor>* attention = nullptr);

// Pre-norm residual block: x + Attn(LN(x)), then x + MLP(LN(x)).
Tensor encoder_block_forward(const Tensor& tokens, const EncoderBlock& block);

// Throws ConfigError when `blocks` is empty.
Tensor encoder_forward(const Tensor& tokens, std::span<const EncoderBlock> blocks);

struct PatchEmbedding {
  std::size_t patch = 16;
  Tensor projection;   // [d x 3*P*P]
  Tensor positions;    // [(N+1) x d]
  Tensor class_token;  // [d]

  static PatchEmbedding random(const VitConfig& cfg, Rng& rng);
  void append_params(ParamList& out, const std::string& prefix) const;
};

/// image[3 x S x S] -> tokens[(N+1) x d]: row 0 is the class token, rows
/// 1..N the projected patches, positional embeddings added throughout.
Tensor patchify(const Tensor& image, const PatchEmbedding& embedding);

/// Frozen patch embedding plus encoder stack with Q/K/V adapters.
class VitEncoder {
 public:
  VitEncoder(const VitConfig& cfg, Rng& rng);

  Tensor forward(const Tensor& image) const;
  const VitConfig& config() const { return cfg_; }
  const PatchEmbedding& embedding() const { return embedding_; }
  const std::vector<EncoderBlock>& blocks() const { return blocks_; }
  void append_params(ParamList& out) const;

 private:
  VitConfig cfg_;
  PatchEmbedding embedding_;
  std::vector<EncoderBlock> blocks_;
};

}  // namespace adprog
