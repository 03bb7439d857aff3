#pragma once

#include "adprog/random.hpp"
#include "adprog/tensor.hpp"

namespace adprog {

inline constexpr double kMaxRotationDegrees = 5.0;

/// Rotates every channel of image[C x H x W] by angle_deg (counter-clockwise)
/// about the image center. Bilinear resampling; samples falling outside the
/// input read as zero. |angle_deg| > 5 is a ConfigError.
Tensor rotate_augment(const Tensor& image, double angle_deg);

// Uniform in [-5, 5].
double random_rotation_angle(Rng& rng);

}  // namespace adprog
