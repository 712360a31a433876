#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include <Eigen/Geometry>

#include "attnwarp/geometry.hpp"
#include "attnwarp/grid.hpp"

namespace testsupport {

using attnwarp::Camera;
using attnwarp::CameraExtrinsics;
using attnwarp::CameraIntrinsics;

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline CameraIntrinsics random_intrinsics(Rng& rng, int w, int h) {
  CameraIntrinsics k;
  k.width = w;
  k.height = h;
  k.fx = uniform(rng, 0.6, 1.4) * w;
  k.fy = k.fx * uniform(rng, 0.9, 1.1);
  k.cx = w * uniform(rng, 0.4, 0.6);
  k.cy = h * uniform(rng, 0.4, 0.6);
  return k;
}

/// Rotation by a bounded angle about a random axis.
inline Eigen::Matrix3d random_rotation(Rng& rng, double max_angle_rad) {
  Eigen::Vector3d axis(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
  if (axis.norm() < 1e-3) axis = Eigen::Vector3d::UnitY();
  return Eigen::AngleAxisd(uniform(rng, -max_angle_rad, max_angle_rad), axis.normalized()).toRotationMatrix();
}

inline Camera random_camera(Rng& rng, int w, int h, double max_angle_rad = 0.3, double max_shift = 0.5) {
  const Eigen::Vector3d t(uniform(rng, -max_shift, max_shift), uniform(rng, -max_shift, max_shift),
                          uniform(rng, -max_shift, max_shift));
  return {random_intrinsics(rng, w, h), CameraExtrinsics::from_rt(random_rotation(rng, max_angle_rad), t)};
}

/// Smooth random depth in [lo, hi] with some zero holes.
inline attnwarp::DepthMap random_depth(Rng& rng, int w, int h, double lo = 1.5, double hi = 6.0,
                                       double hole_fraction = 0.05) {
  attnwarp::DepthMap d(w, h);
  const double a = uniform(rng, 0, 6.28), b = uniform(rng, 0, 6.28);
  const double base = uniform(rng, lo, hi);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double z = base + 0.3 * std::sin(a + 5.0 * x / w) * std::cos(b + 4.0 * y / h);
      z = std::clamp(z, lo, hi);
      d.at(x, y) = uniform(rng, 0, 1) < hole_fraction ? 0.0f : static_cast<float>(z);
    }
  return d;
}

/// Straight-loop reprojection with no matrix library: target pixel center at
/// depth d through the target pose into the source image. Returns false when
/// the point is behind the source camera.
inline bool reference_reproject(int x, int y, double d, const Camera& tgt, const Camera& src, double& u,
                                double& v) {
  const auto& kt = tgt.intrinsics;
  const auto& ks = src.intrinsics;
  const double pc[3] = {(x + 0.5 - kt.cx) / kt.fx * d, (y + 0.5 - kt.cy) / kt.fy * d, d};
  const Eigen::Matrix4d& mt = tgt.extrinsics.world_to_camera;
  const Eigen::Matrix4d& ms = src.extrinsics.world_to_camera;
  // world = R_t^T (pc - t_t)
  double q[3] = {pc[0] - mt(0, 3), pc[1] - mt(1, 3), pc[2] - mt(2, 3)};
  double pw[3] = {0, 0, 0};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) pw[i] += mt(j, i) * q[j];
  double ps[3] = {ms(0, 3), ms(1, 3), ms(2, 3)};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) ps[i] += ms(i, j) * pw[j];
  if (!(ps[2] > 0.0)) return false;
  u = ks.fx * ps[0] / ps[2] + ks.cx;
  v = ks.fy * ps[1] / ps[2] + ks.cy;
  return true;
}

/// Bilinear sample in pixel-center coordinates with edge clamping.
inline double reference_bilinear(const attnwarp::FeatureMap& f, int c, double u, double v) {
  double fx = std::min(std::max(u - 0.5, 0.0), double(f.width - 1));
  double fy = std::min(std::max(v - 0.5, 0.0), double(f.height - 1));
  int x0 = int(std::floor(fx)), y0 = int(std::floor(fy));
  int x1 = std::min(x0 + 1, f.width - 1), y1 = std::min(y0 + 1, f.height - 1);
  double ax = fx - x0, ay = fy - y0;
  return (1 - ay) * ((1 - ax) * f.at(c, y0, x0) + ax * f.at(c, y0, x1)) +
         ay * ((1 - ax) * f.at(c, y1, x0) + ax * f.at(c, y1, x1));
}

inline attnwarp::FeatureMap random_features(Rng& rng, int c, int h, int w, double lo = -1, double hi = 1) {
  attnwarp::FeatureMap f(c, h, w);
  for (float& v : f.data) v = static_cast<float>(uniform(rng, lo, hi));
  return f;
}

/// Empty scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("attnwarp_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testsupport
