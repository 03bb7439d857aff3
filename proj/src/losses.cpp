#include "adprog/losses.hpp"

#include <algorithm>
#include <cmath>

#include "adprog/error.hpp"

namespace adprog {
namespace {

struct Rows {
  std::size_t count;
  std::size_t classes;
};

Rows check_distribution(const Tensor& probs, const Tensor& onehot) {
  if (probs.shape() != onehot.shape() || probs.rank() < 1 || probs.rank() > 2) {
    throw DimensionError("loss: probabilities " + shape_str(probs.shape()) + " and targets " +
                         shape_str(onehot.shape()) + " must share a [C] or [B x C] shape");
  }
  const Rows rows{probs.rank() == 2 ? probs.dim(0) : 1, probs.rank() == 2 ? probs.dim(1) : probs.dim(0)};
  if (rows.count == 0 || rows.classes == 0) throw InputError("loss: empty input");
  const auto p = probs.values();
  const auto y = onehot.values();
  for (std::size_t r = 0; r < rows.count; ++r) {
    double total = 0.0;
    std::size_t hot = 0;
    for (std::size_t c = 0; c < rows.classes; ++c) {
      const double pc = p[r * rows.classes + c];
      if (!(pc >= 0.0 && pc <= 1.0 + 1e-9)) {
        throw InputError("loss: row " + std::to_string(r) + " has probability " + std::to_string(pc) + " outside [0, 1]");
      }
      total += pc;
      const double yc = y[r * rows.classes + c];
      if (yc == 1.0) {
        ++hot;
      } else if (yc != 0.0) {
        throw InputError("loss: target row " + std::to_string(r) + " is not one-hot");
      }
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw InputError("loss: row " + std::to_string(r) + " sums to " + std::to_string(total) + ", not 1");
    }
    if (hot != 1) throw InputError("loss: target row " + std::to_string(r) + " is not one-hot");
  }
  return rows;
}

// Shared kernel: per entry loss -alpha_c y_c (1-p)^gamma log(max(p, floor)).
Tensor modulated_log_loss(const Tensor& probs, const Tensor& onehot, const std::vector<double>& alpha, double gamma) {
  const Rows rows = check_distribution(probs, onehot);
  const auto p = probs.values();
  const auto y = onehot.values();
  const auto alpha_of = [alpha](std::size_t c) { return alpha.size() == 1 ? alpha[0] : alpha[c]; };
  double total = 0.0;
  for (std::size_t r = 0; r < rows.count; ++r) {
    for (std::size_t c = 0; c < rows.classes; ++c) {
      const std::size_t k = r * rows.classes + c;
      if (y[k] == 0.0) continue;
      const double pc = std::clamp(p[k], kProbabilityFloor, 1.0);
      const double modulation = gamma == 0.0 ? 1.0 : std::pow(1.0 - pc, gamma);
      total -= alpha_of(c) * y[k] * modulation * std::log(pc);
    }
  }
  const double inv_rows = 1.0 / static_cast<double>(rows.count);
  return Tensor::from_op({1}, {total * inv_rows}, {probs}, [rows, gamma, inv_rows, alpha_of, y = std::vector<double>(y.begin(), y.end())](detail::Node& self) {
    const auto& pv = self.inputs[0]->value;
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t k = 0; k < pv.size(); ++k) {
      if (y[k] == 0.0) continue;
      // The clamp has zero slope outside [floor, 1].
      if (pv[k] < kProbabilityFloor || pv[k] > 1.0) continue;
      const double pc = pv[k];
      const double a = alpha_of(k % rows.classes) * y[k];
      double d = -(gamma == 0.0 ? 1.0 : std::pow(1.0 - pc, gamma)) / pc;
      if (gamma != 0.0 && pc < 1.0) d += gamma * std::pow(1.0 - pc, gamma - 1.0) * std::log(pc);
      g[k] += self.grad[0] * inv_rows * a * d;
    }
  });
}

Tensor vector_tensor(std::span<const double> v) { return Tensor({v.size()}, std::vector<double>(v.begin(), v.end())); }

}  // namespace

void FocalLossConfig::validate(std::size_t classes) const {
  if (alpha.empty() || (alpha.size() != 1 && alpha.size() != classes)) {
    throw ConfigError("focal loss: alpha needs one entry or one per class");
  }
  for (double a : alpha)
    if (!(a > 0.0)) throw ConfigError("focal loss: alpha must be positive");
  if (!(gamma >= 0.0)) throw ConfigError("focal loss: gamma must be non-negative");
}

Tensor cross_entropy(const Tensor& probs, const Tensor& onehot) { return modulated_log_loss(probs, onehot, {1.0}, 0.0); }

Tensor focal_loss(const Tensor& probs, const Tensor& onehot, const FocalLossConfig& cfg) {
  cfg.validate(probs.rank() == 2 ? probs.dim(1) : probs.numel());
  return modulated_log_loss(probs, onehot, cfg.alpha, cfg.gamma);
}

Tensor bce_loss(const Tensor& p, std::span<const int> labels) {
  if (p.numel() != labels.size() || p.numel() == 0) {
    throw DimensionError("bce: " + std::to_string(labels.size()) + " labels for probabilities " + shape_str(p.shape()));
  }
  const auto pv = p.values();
  double total = 0.0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] != 0 && labels[k] != 1) throw InputError("bce: labels must be 0 or 1");
    if (!(pv[k] >= 0.0 && pv[k] <= 1.0)) throw InputError("bce: probability outside [0, 1]");
    const double q = labels[k] == 1 ? pv[k] : 1.0 - pv[k];
    total -= std::log(std::clamp(q, kProbabilityFloor, 1.0));
  }
  const double inv_n = 1.0 / static_cast<double>(labels.size());
  return Tensor::from_op({1}, {total * inv_n}, {p},
                         [inv_n, y = std::vector<int>(labels.begin(), labels.end())](detail::Node& self) {
                           const auto& pv = self.inputs[0]->value;
                           auto& g = self.inputs[0]->grad_buffer();
                           for (std::size_t k = 0; k < y.size(); ++k) {
                             const double q = y[k] == 1 ? pv[k] : 1.0 - pv[k];
                             if (q < kProbabilityFloor) continue;
                             const double dq = -1.0 / q;
                             g[k] += self.grad[0] * inv_n * (y[k] == 1 ? dq : -dq);
                           }
                         });
}

double cross_entropy(std::span<const double> probs, std::span<const double> onehot) {
  return cross_entropy(vector_tensor(probs), vector_tensor(onehot)).item();
}

double focal_loss(std::span<const double> probs, std::span<const double> onehot, const FocalLossConfig& cfg) {
  return focal_loss(vector_tensor(probs), vector_tensor(onehot), cfg).item();
}

double bce_loss(double p, int label) {
  const int labels[] = {label};
  return bce_loss(Tensor::scalar(p), labels).item();
}

Tensor one_hot(std::span<const int> labels, std::size_t classes) {
  std::vector<double> out(labels.size() * classes, 0.0);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= classes) {
      throw InputError("one_hot: label " + std::to_string(labels[r]) + " outside [0, " + std::to_string(classes) + ")");
    }
    out[r * classes + static_cast<std::size_t>(labels[r])] = 1.0;
  }
  return Tensor({labels.size(), classes}, std::move(out));
}

}  // namespace adprog
