#include "adprog/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "adprog/error.hpp"

namespace adprog {

GradCheckReport grad_check(const std::function<Tensor()>& objective, const std::vector<GradCheckInput>& params,
                           const GradCheckOptions& options) {
  if (!(options.epsilon >= 1e-7 && options.epsilon <= 1e-3)) {
    throw ConfigError("grad_check epsilon must lie in [1e-7, 1e-3]");
  }
  std::vector<Tensor> tensors;
  for (const auto& p : params) {
    if (!p.tensor.is_leaf()) throw InputError("grad_check parameter '" + p.name + "' is not a leaf");
    tensors.push_back(p.tensor);
    tensors.back().zero_grad();
  }
  const Tensor loss = objective();
  if (loss.numel() != 1) throw DimensionError("grad_check objective must be scalar, got " + shape_str(loss.shape()));
  loss.backward();

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& t = tensors[k];
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    const std::size_t n = t.numel();
    const std::size_t stride =
        options.max_entries_per_param == 0 || n <= options.max_entries_per_param
            ? 1
            : (n + options.max_entries_per_param - 1) / options.max_entries_per_param;
    auto values = t.mutable_values();
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = values[i];
      values[i] = saved + options.epsilon;
      const double up = objective().item();
      values[i] = saved - options.epsilon;
      const double down = objective().item();
      values[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw OracleFailure("objective not finite when perturbing '" + params[k].name + "' entry " +
                            std::to_string(i));
      }
      const double numeric = (up - down) / (2.0 * options.epsilon);
      const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
      ++report.entries_checked;
      if (err > report.max_rel_error || report.worst_param.empty()) {
        if (err >= report.max_rel_error) {
          report.max_rel_error = err;
          report.worst_param = params[k].name;
          report.worst_index = i;
        }
      }
    }
    t.zero_grad();
  }
  return report;
}

}  // namespace adprog
