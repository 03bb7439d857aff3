#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "adprog/tensor.hpp"

namespace adprog {

using Rng = std::mt19937_64;

// Independent stream for (seed, tags...), e.g. make_rng(seed, fold) or
// make_rng(seed, subject, copy).
Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags = {});

Tensor normal_tensor(Shape shape, double stddev, Rng& rng, bool requires_grad = false);

}  // namespace adprog
