#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "adprog/tensor.hpp"

namespace adprog {

struct NamedParam {
  std::string name;   // unique within a model, e.g. "encoder.0.lora_q.A"
  std::string group;  // reporting bucket, e.g. "encoder.lora"
  Tensor tensor;
};

using ParamList = std::vector<NamedParam>;

struct ParamReport {
  std::size_t trainable = 0;
  std::size_t frozen = 0;
  // Trainable entries per group, in first-seen order.
  std::vector<std::pair<std::string, std::size_t>> trainable_by_group;
  std::vector<std::pair<std::string, std::size_t>> frozen_by_group;

  std::size_t trainable_in(const std::string& group) const;
};

ParamReport count_trainable_params(const ParamList& params);

void zero_grads(const ParamList& params);

}  // namespace adprog
