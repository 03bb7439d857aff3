#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "adprog/params.hpp"

namespace adprog {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamMoments {
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
};

/// One bias-corrected Adam update of `param` in place. Moments start at zero
/// on the first call. A non-finite gradient throws NumericError and leaves
/// everything untouched.
void adam_step(std::span<double> param, std::span<const double> grad, AdamMoments& state, double lr,
               const AdamConfig& cfg = {}, const std::string& name = "parameter");

/// Adam over the trainable entries of a parameter list. Parameters without
/// requires_grad are never touched.
class Adam {
 public:
  explicit Adam(const ParamList& params, AdamConfig cfg = {});

  // Consumes the current gradients (absent gradients count as zero). All
  // gradients are checked before any parameter moves.
  void step(double lr);

  const AdamConfig& config() const { return cfg_; }
  const std::map<std::string, AdamMoments>& moments() const { return moments_; }
  void set_moments(std::map<std::string, AdamMoments> moments);

 private:
  AdamConfig cfg_;
  std::vector<NamedParam> params_;
  std::map<std::string, AdamMoments> moments_;
};

}  // namespace adprog
