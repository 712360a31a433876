#include "attnwarp/splat.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "attnwarp/error.hpp"

namespace attnwarp {

using Eigen::Vector3d;

void Splat::validate() const {
  require(position.allFinite() && normal.allFinite() && scale.allFinite() && std::isfinite(opacity),
          ErrorKind::NonFinite, "splat has non-finite parameters");
  require(std::abs(normal.norm() - 1.0) <= 1e-6, ErrorKind::Config, "splat normal must be unit length");
  require(scale.x() > 0.0 && scale.y() > 0.0, ErrorKind::Config, "splat scales must be positive");
  require(opacity >= 0.0 && opacity <= 1.0, ErrorKind::Config, "splat opacity must lie in [0,1]");
}

void FilterConfig::validate() const {
  require(std::isfinite(theta_max_deg) && theta_max_deg > 0.0 && theta_max_deg <= 180.0,
          ErrorKind::Config, "theta_max must lie in (0, 180] degrees");
}

double FilterConfig::cos_threshold() const {
  if (theta_max_deg == 60.0) return 0.5;
  if (theta_max_deg == 90.0) return 0.0;
  if (theta_max_deg == 120.0) return -0.5;
  if (theta_max_deg == 180.0) return -1.0;
  return std::cos(theta_max_deg * std::numbers::pi / 180.0);
}

Vector3d view_normal(const Splat& splat, const Camera& cam) {
  const auto r = cam.extrinsics.rotation();
  Vector3d n = r * splat.normal;
  // The camera sits at the origin of its frame, so the splat position in
  // camera coordinates is the camera-to-splat direction.
  const Vector3d to_splat = r * splat.position + cam.extrinsics.translation();
  if (n.dot(to_splat) > 0.0) n = -n;
  return n;
}

bool keeps_normal_pair(const Vector3d& n_src, const Vector3d& n_tgt, const FilterConfig& cfg) {
  return n_src.dot(n_tgt) >= cfg.cos_threshold();
}

std::vector<std::size_t> filter_splat_indices(const SplatSet& set, const Camera& src_cam,
                                              const Camera& tgt_cam, const FilterConfig& cfg) {
  cfg.validate();
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < set.size(); ++i)
    if (keeps_normal_pair(view_normal(set[i], src_cam), view_normal(set[i], tgt_cam), cfg))
      kept.push_back(i);
  return kept;
}

SplatSet filter_splats(const SplatSet& set, const Camera& src_cam, const Camera& tgt_cam,
                       const FilterConfig& cfg) {
  SplatSet out;
  for (std::size_t i : filter_splat_indices(set, src_cam, tgt_cam, cfg)) out.push_back(set[i]);
  return out;
}

namespace {

struct Footprint {
  double u, v, radius;
  float depth;
};

}  // namespace

DepthMap render_depth(const SplatSet& set, const Camera& cam) {
  cam.validate();
  const CameraIntrinsics& k = cam.intrinsics;
  DepthMap depth(k.width, k.height, 0.0f);

  std::vector<Footprint> prints;
  prints.reserve(set.size());
  for (const Splat& s : set) {
    if (s.opacity < kMinRenderOpacity) continue;
    const Vector3d p = world_to_camera(s.position, cam.extrinsics);
    if (!(p.z() > 0.0)) continue;
    const Projection proj = project(p, k);
    const double r = k.mean_focal() * s.scale.maxCoeff() / p.z();
    prints.push_back({proj.pixel.x(), proj.pixel.y(), r, static_cast<float>(p.z())});
  }

  // Row bands own disjoint pixels and each pixel keeps the minimum, so the
  // result does not depend on splat order or on the partition.
  constexpr int kBand = 16;
  const int bands = (k.height + kBand - 1) / kBand;
#pragma omp parallel for schedule(dynamic)
  for (int b = 0; b < bands; ++b) {
    const int row_lo = b * kBand;
    const int row_hi = std::min(k.height, row_lo + kBand) - 1;
    for (const Footprint& f : prints) {
      const int y0 = std::max(row_lo, static_cast<int>(std::ceil(f.v - f.radius - 0.5)));
      const int y1 = std::min(row_hi, static_cast<int>(std::floor(f.v + f.radius - 0.5)));
      if (y0 > y1) continue;
      const int x0 = std::max(0, static_cast<int>(std::ceil(f.u - f.radius - 0.5)));
      const int x1 = std::min(k.width - 1, static_cast<int>(std::floor(f.u + f.radius - 0.5)));
      const double r2 = f.radius * f.radius;
      for (int y = y0; y <= y1; ++y) {
        const double dy = y + 0.5 - f.v;
        for (int x = x0; x <= x1; ++x) {
          const double dx = x + 0.5 - f.u;
          if (dx * dx + dy * dy > r2) continue;
          float& cur = depth.at(x, y);
          if (cur == 0.0f || f.depth < cur) cur = f.depth;
        }
      }
    }
  }
  return depth;
}

Tensor splats_to_tensor(const SplatSet& set) {
  std::vector<float> data;
  data.reserve(set.size() * 9);
  for (const Splat& s : set) {
    for (double x : {s.position.x(), s.position.y(), s.position.z(), s.normal.x(), s.normal.y(),
                     s.normal.z(), s.scale.x(), s.scale.y(), s.opacity})
      data.push_back(static_cast<float>(x));
  }
  return Tensor({static_cast<std::uint32_t>(set.size()), 9u}, std::move(data));
}

SplatSet splats_from_tensor(const Tensor& t) {
  require(t.dims.size() == 2 && t.dims[1] == 9, ErrorKind::DimensionMismatch,
          "splat table must be an N x 9 tensor");
  SplatSet set(t.dims[0]);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const float* row = t.data.data() + 9 * i;
    Splat& s = set[i];
    s.position = {row[0], row[1], row[2]};
    // float32 storage perturbs the unit norm; renormalize.
    s.normal = Vector3d(row[3], row[4], row[5]);
    const double len = s.normal.norm();
    require(std::abs(len - 1.0) <= 1e-4, ErrorKind::Config, "splat table row has a non-unit normal");
    s.normal /= len;
    s.scale = {row[6], row[7]};
    s.opacity = row[8];
    s.validate();
  }
  return set;
}

}  // namespace attnwarp
