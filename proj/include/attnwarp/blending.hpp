#pragma once

#include <cstdint>

#include "attnwarp/grid.hpp"

namespace attnwarp {

/// Linear decay of the warped-attention weight over the denoising loop.
struct BlendSchedule {
  double alpha0 = 0.9;
  std::int64_t total_steps = 1;

  void validate() const;
};

/// alpha0 * (T - t) / T. Throws OutOfRange unless 0 <= t <= T.
double alpha_at(const BlendSchedule& schedule, std::int64_t t);

/// Masked blend of warped and freshly computed attention:
///   masked = warped * M + fresh * (1 - M)
///   out    = alpha * masked + (1 - alpha) * fresh
/// evaluated in one pass as out = a*warped + (1 - a)*fresh with a = alpha*M.
/// Throws DimensionMismatch, NonFinite or OutOfRange.
FeatureMap blend_masked(const FeatureMap& warped, const FeatureMap& fresh, const Mask& mask,
                        double alpha);

}  // namespace attnwarp
