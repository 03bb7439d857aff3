#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adprog/tensor.hpp"

namespace adprog {

// Probabilities are clamped to [kProbabilityFloor, 1] before taking logs.
inline constexpr double kProbabilityFloor = 1e-12;

struct FocalLossConfig {
  // One entry applies to every class; otherwise one per class.
  std::vector<double> alpha{1.0};
  double gamma = 2.0;

  void validate(std::size_t classes) const;
};

// Losses over probs[B x C] (or a single [C] vector) and one-hot targets of
// the same shape; the result is the mean over rows. Rows of probs must sum
// to 1 within 1e-9 and targets must be one-hot, else InputError.

// -sum_c y_c log(p_c)
Tensor cross_entropy(const Tensor& probs, const Tensor& onehot);
// -sum_c alpha_c y_c (1 - p_c)^gamma log(p_c)
Tensor focal_loss(const Tensor& probs, const Tensor& onehot, const FocalLossConfig& cfg = {});
// -[y log p + (1 - y) log(1 - p)] over p[B x 1] (or [B]) and labels in {0, 1}.
Tensor bce_loss(const Tensor& p, std::span<const int> labels);

double cross_entropy(std::span<const double> probs, std::span<const double> onehot);
double focal_loss(std::span<const double> probs, std::span<const double> onehot, const FocalLossConfig& cfg = {});
double bce_loss(double p, int label);

Tensor one_hot(std::span<const int> labels, std::size_t classes);

}  // namespace adprog
