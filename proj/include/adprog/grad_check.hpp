#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "adprog/tensor.hpp"

namespace adprog {

struct GradCheckInput {
  std::string name;
  Tensor tensor;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t entries_checked = 0;
};

struct GradCheckOptions {
  double epsilon = 1e-6;
  // 0 checks every entry; otherwise an evenly strided subset of at most this
  // many entries per parameter.
  std::size_t max_entries_per_param = 0;
};

/// Compares reverse-mode gradients of a scalar objective with central
/// differences. The error of one entry is
///   |analytic - numeric| / max(1, |numeric|)
/// and the report carries the maximum over all checked entries.
///
/// `objective` must rebuild the graph on every call and be deterministic.
/// Throws OracleFailure naming the parameter if a perturbed evaluation is not
/// finite, and ConfigError if epsilon is outside [1e-7, 1e-3].
GradCheckReport grad_check(const std::function<Tensor()>& objective, const std::vector<GradCheckInput>& params,
                           const GradCheckOptions& options = {});

}  // namespace adprog
