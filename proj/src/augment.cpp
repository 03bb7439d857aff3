#include "adprog/augment.hpp"

#include <cmath>
#include <numbers>

#include "adprog/error.hpp"

namespace adprog {

Tensor rotate_augment(const Tensor& image, double angle_deg) {
  if (!(std::abs(angle_deg) <= kMaxRotationDegrees)) {
    throw ConfigError("rotate_augment: angle " + std::to_string(angle_deg) + " outside [-5, 5] degrees");
  }
  if (image.rank() != 3) throw DimensionError("rotate_augment: expected [C x H x W], got " + shape_str(image.shape()));
  const std::size_t channels = image.dim(0), h = image.dim(1), w = image.dim(2);
  const double theta = angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  const double cy = 0.5 * static_cast<double>(h - 1), cx = 0.5 * static_cast<double>(w - 1);
  const auto in = image.values();
  std::vector<double> out(in.size(), 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      // Inverse map: where does output (y, x) come from.
      const double sx = c * dx - s * dy + cx;
      const double sy = s * dx + c * dy + cy;
      const double fx = std::floor(sx), fy = std::floor(sy);
      const double ax = sx - fx, ay = sy - fy;
      const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
      const auto inside = [&](long yy, long xx) {
        return yy >= 0 && xx >= 0 && yy < static_cast<long>(h) && xx < static_cast<long>(w);
      };
      const long ys[2] = {y0, y0 + 1}, xs[2] = {x0, x0 + 1};
      const double wy[2] = {1.0 - ay, ay}, wx[2] = {1.0 - ax, ax};
      for (std::size_t ch = 0; ch < channels; ++ch) {
        const std::size_t base = ch * h * w;
        double acc = 0.0;
        for (int i = 0; i < 2; ++i) {
          for (int j = 0; j < 2; ++j) {
            const double weight = wy[i] * wx[j];
            if (weight == 0.0 || !inside(ys[i], xs[j])) continue;
            acc += weight * in[base + static_cast<std::size_t>(ys[i]) * w + static_cast<std::size_t>(xs[j])];
          }
        }
        out[base + y * w + x] = acc;
      }
    }
  }
  return Tensor(image.shape(), std::move(out));
}

double random_rotation_angle(Rng& rng) {
  return std::uniform_real_distribution<double>(-kMaxRotationDegrees, kMaxRotationDegrees)(rng);
}

}  // namespace adprog
