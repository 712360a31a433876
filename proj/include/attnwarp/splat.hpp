#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "attnwarp/geometry.hpp"
#include "attnwarp/grid.hpp"
#include "attnwarp/tensor_io.hpp"

namespace attnwarp {

/// Oriented planar disk primitive.
struct Splat {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d(0, 0, -1);
  Eigen::Vector2d scale = Eigen::Vector2d(1, 1);
  double opacity = 1.0;

  void validate() const;
};

using SplatSet = std::vector<Splat>;

struct FilterConfig {
  double theta_max_deg = 60.0;

  void validate() const;
  /// cos(theta_max), exact for angles whose cosine is rational (0, 60, 90,
  /// 120, 180 degrees).
  double cos_threshold() const;
};

/// Splats below this opacity are not rendered.
inline constexpr double kMinRenderOpacity = 0.05;

/// World normal rotated into the camera frame, negated when it faces away
/// from the camera.
Eigen::Vector3d view_normal(const Splat& splat, const Camera& cam);

bool keeps_normal_pair(const Eigen::Vector3d& n_src, const Eigen::Vector3d& n_tgt,
                       const FilterConfig& cfg);

/// Indices of splats whose view normals in the two cameras differ by at most
/// theta_max.
std::vector<std::size_t> filter_splat_indices(const SplatSet& set, const Camera& src_cam,
                                              const Camera& tgt_cam, const FilterConfig& cfg);
SplatSet filter_splats(const SplatSet& set, const Camera& src_cam, const Camera& tgt_cam,
                       const FilterConfig& cfg);

/// Hard-disk z-buffer: each splat covers the pixels whose centers lie within
/// r = f_mean * max(scale) / z of its projected center, and writes its center
/// depth where nearer. Uncovered pixels stay 0.
DepthMap render_depth(const SplatSet& set, const Camera& cam);

// N x 9 table, columns px,py,pz,nx,ny,nz,sx,sy,opacity.
Tensor splats_to_tensor(const SplatSet& set);
SplatSet splats_from_tensor(const Tensor& t);

}  // namespace attnwarp
