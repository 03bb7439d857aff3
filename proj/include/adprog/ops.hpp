#pragma once

#include <cstddef>
#include <random>
#include <string_view>
#include <vector>

#include "adprog/tensor.hpp"

namespace adprog {

// Elementwise arithmetic on identically shaped tensors.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);

// a[m x n] + bias[n] broadcast over rows.
Tensor add_bias(const Tensor& a, const Tensor& bias);

// [m x k] . [k x n] -> [m x n]. Backward: dA = dOut.B^T, dB = A^T.dOut.
Tensor matmul(const Tensor& a, const Tensor& b);
// [m x k] . [n x k]^T -> [m x n], the x.W^T form of a linear layer.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

enum class Activation { sigmoid, tanh, softmax, swish, gelu };

// Throws ConfigError for names other than sigmoid, tanh, softmax, swish, gelu.
Activation parse_activation(std::string_view name);
std::string_view activation_name(Activation kind);

// Elementwise activations ignore `axis`. Softmax normalizes along `axis`
// (negative values count from the last axis) and requires it to be given.
inline constexpr int kNoAxis = 1 << 30;
Tensor activate(const Tensor& x, Activation kind, int axis = kNoAxis);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor swish(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor softmax(const Tensor& x, int axis);

// Inverted dropout: survivors are scaled by 1/(1-rate), so inference is the
// identity. Throws ConfigError unless 0 <= rate < 1.
Tensor dropout(const Tensor& x, double rate, bool training, std::mt19937_64& rng);

// Cross-correlation of input[C_in x H x W] with kernels[C_out x C_in x kh x kw].
// Output extent is (H + 2*padding - kh) / stride + 1 per spatial axis.
Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride, std::size_t padding);
// x[C x H x W] + bias[C] per channel.
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

// Corner-aligned bilinear resampling of input[C x H x W] to [C x H2 x W2].
// Resizing to the input's own extent returns an exact copy.
Tensor bilinear_resize(const Tensor& input, std::size_t out_h, std::size_t out_w);

// Per-row layer normalization of x[T x d] with affine gamma[d], beta[d].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-6);

// image[C x S x S] -> [N x C*P*P], patches in row-major grid order, each
// flattened channel-major then row then column.
Tensor extract_patches(const Tensor& image, std::size_t patch);

}  // namespace adprog
