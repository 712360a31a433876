#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "attnwarp/geometry.hpp"
#include "attnwarp/grid.hpp"

namespace attnwarp {

/// Deterministic pairwise (tree) summation.
double pairwise_sum(std::span<const double> values);

double l1_loss(std::span<const float> a, std::span<const float> b);
double l1_loss(const FeatureMap& a, const FeatureMap& b);

struct NormalMap {
  int width = 0;
  int height = 0;
  std::vector<Eigen::Vector3d> normals;
  std::vector<std::uint8_t> defined;

  NormalMap() = default;
  NormalMap(int w, int h);

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
};

/// Normal of the surface through each pixel and its +x / +y neighbours,
/// oriented toward the camera. The last row and column and any pixel touching
/// zero depth are left undefined.
NormalMap normals_from_depth(const DepthMap& depth, const Camera& cam);

struct Intersection {
  double weight = 0.0;
  double depth = 0.0;
  Eigen::Vector3d normal = Eigen::Vector3d(0, 0, -1);
};

/// Ragged per-ray intersection lists in CSR form. When used against a normal
/// map, ray r belongs to pixel (r % W, r / W).
struct RayIntersections {
  std::vector<std::uint32_t> offsets{0};
  std::vector<Intersection> hits;

  std::size_t ray_count() const { return offsets.size() - 1; }
  std::span<const Intersection> ray(std::size_t r) const {
    return {hits.data() + offsets[r], hits.data() + offsets[r + 1]};
  }
  void add_ray(std::span<const Intersection> ray_hits);
  void validate() const;
};

/// Sum of w_i (1 - n_i . N) over intersections, divided by the number of rays
/// that have hits and a defined N.
double normal_consistency_loss(const RayIntersections& rays, const NormalMap& normals);

/// Sum over ordered pairs of w_i w_j |z_i - z_j| per ray, averaged over rays.
double depth_distortion_loss(const RayIntersections& rays);

/// Subgradient of depth_distortion_loss with respect to every intersection
/// depth (sign(0) = 0 at ties).
std::vector<double> depth_distortion_grad(const RayIntersections& rays);

// Ragged triplet: <stem>.offsets.fwt [R+1], <stem>.weights.fwt [K],
// <stem>.table.fwt [K,4] with columns depth,nx,ny,nz. Offsets are stored as
// float32 and must stay below 2^24.
void save_rays(const std::filesystem::path& stem, const RayIntersections& rays);
RayIntersections load_rays(const std::filesystem::path& stem);

/// Slot for losses computed outside this library, e.g. a perceptual loss.
struct ExternalLoss {
  std::string name;
  double weight = 0.0;
  std::function<double(const FeatureMap& rendered, const FeatureMap& target)> fn;
};

struct ImageLossWeights {
  double l1 = 1.0;
  std::vector<ExternalLoss> external;
};

/// Weighted sum of the L1 term and every external term.
double image_loss(const FeatureMap& rendered, const FeatureMap& target,
                  const ImageLossWeights& weights);

}  // namespace attnwarp
