#include "attnwarp/blending.hpp"

#include <cmath>
#include <string>

#include "attnwarp/error.hpp"

namespace attnwarp {

void BlendSchedule::validate() const {
  require(std::isfinite(alpha0) && alpha0 >= 0.0 && alpha0 <= 1.0, ErrorKind::Config,
          "alpha0 must lie in [0,1]");
  require(total_steps >= 1, ErrorKind::Config, "total_steps must be at least 1");
}

double alpha_at(const BlendSchedule& schedule, std::int64_t t) {
  schedule.validate();
  require(t >= 0 && t <= schedule.total_steps, ErrorKind::OutOfRange,
          "step " + std::to_string(t) + " outside [0, " + std::to_string(schedule.total_steps) + "]");
  return schedule.alpha0 * static_cast<double>(schedule.total_steps - t) /
         static_cast<double>(schedule.total_steps);
}

FeatureMap blend_masked(const FeatureMap& warped, const FeatureMap& fresh, const Mask& mask,
                        double alpha) {
  require(warped.same_shape(fresh), ErrorKind::DimensionMismatch,
          "warped and fresh feature maps differ in shape");
  require(mask.width == fresh.width && mask.height == fresh.height, ErrorKind::DimensionMismatch,
          "mask size differs from the feature maps");
  require(std::isfinite(alpha), ErrorKind::NonFinite, "alpha must be finite");
  require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::OutOfRange, "alpha must lie in [0,1]");
  mask.validate();
  warped.require_finite("warped feature map");
  fresh.require_finite("fresh feature map");

  FeatureMap out(fresh.channels, fresh.height, fresh.width);
  const std::size_t plane = fresh.plane();
  for (int c = 0; c < fresh.channels; ++c) {
    const std::size_t base = static_cast<std::size_t>(c) * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      const double a = alpha * mask.data[p];
      out.data[base + p] =
          static_cast<float>(a * warped.data[base + p] + (1.0 - a) * fresh.data[base + p]);
    }
  }
  return out;
}

}  // namespace attnwarp
