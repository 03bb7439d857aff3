#include "adprog/params.hpp"

#include <algorithm>

namespace adprog {
namespace {

void bump(std::vector<std::pair<std::string, std::size_t>>& groups, const std::string& group, std::size_t n) {
  auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == group; });
  if (it == groups.end()) {
    groups.emplace_back(group, n);
  } else {
    it->second += n;
  }
}

}  // namespace

std::size_t ParamReport::trainable_in(const std::string& group) const {
  for (const auto& [name, n] : trainable_by_group)
    if (name == group) return n;
  return 0;
}

ParamReport count_trainable_params(const ParamList& params) {
  ParamReport report;
  for (const NamedParam& p : params) {
    if (p.tensor.requires_grad()) {
      report.trainable += p.tensor.numel();
      bump(report.trainable_by_group, p.group, p.tensor.numel());
    } else {
      report.frozen += p.tensor.numel();
      bump(report.frozen_by_group, p.group, p.tensor.numel());
    }
  }
  return report;
}

void zero_grads(const ParamList& params) {
  for (const NamedParam& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

}  // namespace adprog
