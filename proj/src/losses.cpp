#include "attnwarp/losses.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include <Eigen/Geometry>

#include "attnwarp/error.hpp"
#include "attnwarp/tensor_io.hpp"

namespace attnwarp {

using Eigen::Vector3d;

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

double l1_loss(std::span<const float> a, std::span<const float> b) {
  require(a.size() == b.size(), ErrorKind::DimensionMismatch, "l1_loss: shapes differ");
  require(!a.empty(), ErrorKind::Size, "l1_loss: empty input");
  std::vector<double> diffs(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    diffs[i] = std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
  return pairwise_sum(diffs) / static_cast<double>(a.size());
}

double l1_loss(const FeatureMap& a, const FeatureMap& b) {
  require(a.same_shape(b), ErrorKind::DimensionMismatch, "l1_loss: shapes differ");
  return l1_loss(std::span<const float>(a.data), std::span<const float>(b.data));
}

NormalMap::NormalMap(int w, int h)
    : width(w),
      height(h),
      normals(static_cast<std::size_t>(w) * h, Vector3d::Zero()),
      defined(static_cast<std::size_t>(w) * h, 0) {}

NormalMap normals_from_depth(const DepthMap& depth, const Camera& cam) {
  const CameraIntrinsics& k = cam.intrinsics;
  require(depth.width == k.width && depth.height == k.height, ErrorKind::Config,
          "depth size does not match the camera");
  depth.validate();
  NormalMap out(depth.width, depth.height);
  for (int y = 0; y + 1 < depth.height; ++y) {
    for (int x = 0; x + 1 < depth.width; ++x) {
      const double d = depth.at(x, y);
      const double dx = depth.at(x + 1, y);
      const double dy = depth.at(x, y + 1);
      if (!(d > 0.0 && dx > 0.0 && dy > 0.0)) continue;
      const Vector3d p = unproject(pixel_center(x, y), d, k);
      const Vector3d px = unproject(pixel_center(x + 1, y), dx, k);
      const Vector3d py = unproject(pixel_center(x, y + 1), dy, k);
      Vector3d n = (px - p).cross(py - p);
      const double len = n.norm();
      if (!(len > 0.0)) continue;
      n /= len;
      if (n.dot(p) > 0.0) n = -n;
      const std::size_t i = out.index(x, y);
      out.normals[i] = n;
      out.defined[i] = 1;
    }
  }
  return out;
}

void RayIntersections::add_ray(std::span<const Intersection> ray_hits) {
  hits.insert(hits.end(), ray_hits.begin(), ray_hits.end());
  offsets.push_back(static_cast<std::uint32_t>(hits.size()));
}

void RayIntersections::validate() const {
  require(!offsets.empty() && offsets.front() == 0 && offsets.back() == hits.size(), ErrorKind::Config,
          "ray offsets do not cover the intersection list");
  for (std::size_t r = 0; r + 1 < offsets.size(); ++r)
    require(offsets[r] <= offsets[r + 1], ErrorKind::Config, "ray offsets must be non-decreasing");
  for (const Intersection& h : hits) {
    require(std::isfinite(h.weight) && std::isfinite(h.depth) && h.normal.allFinite(),
            ErrorKind::NonFinite, "ray intersection has non-finite values");
    require(h.weight >= 0.0, ErrorKind::OutOfRange, "ray intersection weight must be non-negative");
    require(h.depth > 0.0, ErrorKind::OutOfRange, "ray intersection depth must be positive");
  }
}

double normal_consistency_loss(const RayIntersections& rays, const NormalMap& normals) {
  rays.validate();
  require(rays.ray_count() == static_cast<std::size_t>(normals.width) * normals.height,
          ErrorKind::DimensionMismatch, "one ray per normal-map pixel is required");
  std::vector<double> per_ray;
  for (std::size_t r = 0; r < rays.ray_count(); ++r) {
    const auto hits = rays.ray(r);
    if (hits.empty() || !normals.defined[r]) continue;
    const Vector3d& big_n = normals.normals[r];
    double s = 0.0;
    for (const Intersection& h : hits) s += h.weight * (1.0 - h.normal.dot(big_n));
    per_ray.push_back(s);
  }
  if (per_ray.empty()) return 0.0;
  return pairwise_sum(per_ray) / static_cast<double>(per_ray.size());
}

namespace {

// Sum over ordered pairs of w_i w_j |z_i - z_j| in O(k log k): after sorting
// by depth each element contributes w_j (z_j * W_before - S_before).
double ray_distortion(std::span<const Intersection> hits) {
  if (hits.size() < 2) return 0.0;
  std::vector<std::pair<double, double>> zw;
  zw.reserve(hits.size());
  for (const Intersection& h : hits) zw.emplace_back(h.depth, h.weight);
  std::sort(zw.begin(), zw.end());
  double w_before = 0.0;
  double s_before = 0.0;
  double acc = 0.0;
  for (const auto& [z, w] : zw) {
    acc += w * (z * w_before - s_before);
    w_before += w;
    s_before += w * z;
  }
  return 2.0 * acc;
}

}  // namespace

double depth_distortion_loss(const RayIntersections& rays) {
  rays.validate();
  if (rays.ray_count() == 0) return 0.0;
  std::vector<double> per_ray(rays.ray_count());
  for (std::size_t r = 0; r < rays.ray_count(); ++r) per_ray[r] = ray_distortion(rays.ray(r));
  return pairwise_sum(per_ray) / static_cast<double>(rays.ray_count());
}

std::vector<double> depth_distortion_grad(const RayIntersections& rays) {
  rays.validate();
  std::vector<double> grad(rays.hits.size(), 0.0);
  if (rays.ray_count() == 0) return grad;
  const double inv_rays = 1.0 / static_cast<double>(rays.ray_count());
  for (std::size_t r = 0; r < rays.ray_count(); ++r) {
    const std::size_t begin = rays.offsets[r];
    const std::size_t end = rays.offsets[r + 1];
    for (std::size_t k = begin; k < end; ++k) {
      double g = 0.0;
      for (std::size_t j = begin; j < end; ++j) {
        const double dz = rays.hits[k].depth - rays.hits[j].depth;
        const double sign = dz > 0.0 ? 1.0 : (dz < 0.0 ? -1.0 : 0.0);
        g += rays.hits[j].weight * sign;
      }
      // Each unordered pair appears twice in the ordered sum.
      grad[k] = 2.0 * rays.hits[k].weight * g * inv_rays;
    }
  }
  return grad;
}

void save_rays(const std::filesystem::path& stem, const RayIntersections& rays) {
  rays.validate();
  constexpr std::uint32_t kExactFloatLimit = 1u << 24;
  require(rays.hits.size() < kExactFloatLimit, ErrorKind::Size,
          "too many intersections for float32 offsets");
  std::vector<float> offsets(rays.offsets.begin(), rays.offsets.end());
  std::vector<float> weights;
  std::vector<float> table;
  weights.reserve(rays.hits.size());
  table.reserve(rays.hits.size() * 4);
  for (const Intersection& h : rays.hits) {
    weights.push_back(static_cast<float>(h.weight));
    table.push_back(static_cast<float>(h.depth));
    table.push_back(static_cast<float>(h.normal.x()));
    table.push_back(static_cast<float>(h.normal.y()));
    table.push_back(static_cast<float>(h.normal.z()));
  }
  const auto k = static_cast<std::uint32_t>(rays.hits.size());
  const std::string base = stem.string();
  save_tensor(base + ".offsets.fwt", Tensor({static_cast<std::uint32_t>(offsets.size())}, offsets));
  save_tensor(base + ".weights.fwt", Tensor({k}, weights));
  save_tensor(base + ".table.fwt", Tensor({k, 4u}, table));
}

RayIntersections load_rays(const std::filesystem::path& stem) {
  const std::string base = stem.string();
  const Tensor offsets = load_tensor(base + ".offsets.fwt");
  const Tensor weights = load_tensor(base + ".weights.fwt");
  const Tensor table = load_tensor(base + ".table.fwt");
  require(offsets.dims.size() == 1 && weights.dims.size() == 1 && table.dims.size() == 2 &&
              table.dims[1] == 4 && table.dims[0] == weights.dims[0],
          ErrorKind::DimensionMismatch, "ray triplet shapes are inconsistent");
  RayIntersections rays;
  rays.offsets.clear();
  for (float o : offsets.data) {
    require(o >= 0.0f && o == std::floor(o), ErrorKind::Config, "ray offsets must be whole numbers");
    rays.offsets.push_back(static_cast<std::uint32_t>(o));
  }
  rays.hits.resize(weights.dims[0]);
  for (std::size_t i = 0; i < rays.hits.size(); ++i) {
    rays.hits[i].weight = weights.data[i];
    rays.hits[i].depth = table.data[4 * i];
    rays.hits[i].normal = {table.data[4 * i + 1], table.data[4 * i + 2], table.data[4 * i + 3]};
  }
  rays.validate();
  return rays;
}

double image_loss(const FeatureMap& rendered, const FeatureMap& target, const ImageLossWeights& weights) {
  double total = weights.l1 == 0.0 ? 0.0 : weights.l1 * l1_loss(rendered, target);
  for (const ExternalLoss& ext : weights.external) {
    require(static_cast<bool>(ext.fn), ErrorKind::Config, "external loss '" + ext.name + "' has no function");
    total += ext.weight * ext.fn(rendered, target);
  }
  return total;
}

}  // namespace attnwarp
