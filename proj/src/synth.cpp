#include "attnwarp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "attnwarp/error.hpp"
#include "attnwarp/tensor_io.hpp"

namespace attnwarp {

namespace fs = std::filesystem;
using Eigen::Vector2d;
using Eigen::Vector3d;

Vector3d PlaneGeometry::normal() const {
  const double t = tilt_deg * std::numbers::pi / 180.0;
  return {std::sin(t), 0.0, std::cos(t)};
}

void SyntheticScene::validate() const {
  require(!rig.empty(), ErrorKind::Config, "scene needs at least one camera");
  for (const auto& cam : rig) cam.validate();
  require(splat_spacing > 0.0, ErrorKind::Config, "splat_spacing must be positive");
  require(plane_extent > 0.0, ErrorKind::Config, "plane_extent must be positive");
  if (const auto* s = std::get_if<SphereGeometry>(&geometry))
    require(s->radius > 0.0, ErrorKind::Config, "sphere radius must be positive");
}

std::optional<double> SyntheticScene::ray_depth(const Camera& cam, const Vector2d& pixel) const {
  const CameraIntrinsics& k = cam.intrinsics;
  // Ray direction with unit z in the camera frame, so the hit parameter is
  // the depth itself.
  const Vector3d dir_cam((pixel.x() - k.cx) / k.fx, (pixel.y() - k.cy) / k.fy, 1.0);
  const Vector3d dir = cam.extrinsics.rotation().transpose() * dir_cam;
  const Vector3d origin = cam.extrinsics.center();

  if (const auto* plane = std::get_if<PlaneGeometry>(&geometry)) {
    const Vector3d n = plane->normal();
    const double denom = n.dot(dir);
    if (std::abs(denom) < 1e-12) return std::nullopt;
    const double t = n.dot(Vector3d(0, 0, plane->z) - origin) / denom;
    if (!(t > 0.0)) return std::nullopt;
    return t;
  }
  const auto& sphere = std::get<SphereGeometry>(geometry);
  const Vector3d oc = origin - sphere.center;
  const double a = dir.squaredNorm();
  const double b = 2.0 * dir.dot(oc);
  const double c = oc.squaredNorm() - sphere.radius * sphere.radius;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return std::nullopt;
  const double root = std::sqrt(disc);
  // Numerically stable pair of roots.
  const double q = -0.5 * (b + std::copysign(root, b));
  double t0 = q / a;
  double t1 = q != 0.0 ? c / q : t0;
  if (t0 > t1) std::swap(t0, t1);
  if (t0 > 0.0) return t0;
  if (t1 > 0.0) return t1;
  return std::nullopt;
}

DepthMap SyntheticScene::depth(const Camera& cam) const {
  const CameraIntrinsics& k = cam.intrinsics;
  DepthMap d(k.width, k.height, 0.0f);
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x)
      if (auto z = ray_depth(cam, pixel_center(x, y))) d.at(x, y) = static_cast<float>(*z);
  return d;
}

SplatSet SyntheticScene::sample_splats() const {
  SplatSet out;
  const double s = splat_spacing;
  if (const auto* plane = std::get_if<PlaneGeometry>(&geometry)) {
    const double t = plane->tilt_deg * std::numbers::pi / 180.0;
    const Vector3d e1(std::cos(t), 0.0, -std::sin(t));
    const Vector3d e2(0.0, 1.0, 0.0);
    const Vector3d origin(0.0, 0.0, plane->z);
    const int n = static_cast<int>(std::floor(plane_extent / s));
    out.reserve(static_cast<std::size_t>(2 * n + 1) * (2 * n + 1));
    for (int j = -n; j <= n; ++j)
      for (int i = -n; i <= n; ++i) {
        Splat sp;
        sp.position = origin + (i * s) * e1 + (j * s) * e2;
        sp.normal = plane->normal();
        sp.scale = {s, s};
        sp.opacity = 1.0;
        out.push_back(sp);
      }
    return out;
  }
  // Fibonacci lattice with roughly `s` between neighbours.
  const auto& sphere = std::get<SphereGeometry>(geometry);
  const double area = 4.0 * std::numbers::pi * sphere.radius * sphere.radius;
  const auto n = static_cast<std::size_t>(std::ceil(area / (s * s)));
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double y = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
    const double phi = golden * static_cast<double>(i);
    Splat sp;
    sp.normal = Vector3d(std::cos(phi) * r, y, std::sin(phi) * r).normalized();
    sp.position = sphere.center + sphere.radius * sp.normal;
    sp.scale = {s, s};
    sp.opacity = 1.0;
    out.push_back(sp);
  }
  return out;
}

FeatureMap SyntheticScene::texture(const Camera& cam) const {
  const CameraIntrinsics& k = cam.intrinsics;
  FeatureMap img(3, k.height, k.width, 0.0f);
  constexpr double kCell = 0.25;
  const float light[3] = {0.9f, 0.8f, 0.2f};
  const float dark[3] = {0.1f, 0.3f, 0.7f};
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x) {
      const auto z = ray_depth(cam, pixel_center(x, y));
      if (!z) continue;
      const Vector3d p = camera_to_world(unproject(pixel_center(x, y), *z, k), cam.extrinsics);
      // Lattice offset keeps axis-aligned surfaces off the cell boundaries.
      const Vector3d q = p / kCell + Vector3d(0.137, 0.291, 0.413);
      const auto parity =
          static_cast<long long>(std::floor(q.x()) + std::floor(q.y()) + std::floor(q.z()));
      const float* col = (parity % 2 == 0) ? light : dark;
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = col[c];
    }
  return img;
}

std::vector<Camera> arc_rig(int count, double arc_deg, double radius, const Vector3d& target,
                            const CameraIntrinsics& intr) {
  require(count >= 1, ErrorKind::Config, "rig needs at least one camera");
  require(radius > 0.0, ErrorKind::Config, "rig radius must be positive");
  std::vector<Camera> rig;
  for (int k = 0; k < count; ++k) {
    const double frac = count == 1 ? 0.5 : static_cast<double>(k) / (count - 1);
    const double theta = (-arc_deg + 2.0 * arc_deg * frac) * std::numbers::pi / 180.0;
    const Vector3d center = target + radius * Vector3d(std::sin(theta), 0.0, -std::cos(theta));
    rig.push_back({intr, CameraExtrinsics::look_at(center, target)});
  }
  return rig;
}

namespace {

Vector3d vec3(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  require(v.size() == 3, ErrorKind::Config, "expected a 3-vector");
  return {v[0], v[1], v[2]};
}

std::string numbered(const char* stem, std::size_t k, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%02zu.%s", stem, k, ext);
  return buf;
}

std::string view_id(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "view_%02zu", k);
  return buf;
}

}  // namespace

SyntheticScene scene_from_json(const nlohmann::json& j) {
  SyntheticScene scene;
  try {
    const auto& g = j.at("geometry");
    const std::string type = g.at("type").get<std::string>();
    if (type == "plane") {
      scene.geometry = PlaneGeometry{g.value("z", 2.0), g.value("tilt_deg", 0.0)};
    } else if (type == "sphere") {
      scene.geometry = SphereGeometry{vec3(g.at("center")), g.at("radius").get<double>()};
    } else {
      fail(ErrorKind::Config, "unknown geometry type '" + type + "'");
    }
    if (j.contains("cameras")) {
      for (const auto& c : j.at("cameras")) scene.rig.push_back(camera_from_json_text(c.dump()));
    } else {
      const auto& r = j.at("rig");
      const auto& ij = r.at("intrinsics");
      CameraIntrinsics intr;
      intr.width = ij.at("width").get<int>();
      intr.height = ij.at("height").get<int>();
      intr.fx = ij.at("fx").get<double>();
      intr.fy = ij.value("fy", intr.fx);
      intr.cx = ij.value("cx", intr.width / 2.0);
      intr.cy = ij.value("cy", intr.height / 2.0);
      scene.rig = arc_rig(r.value("count", 8), r.value("arc_deg", 20.0), r.value("radius", 3.0),
                          r.contains("target") ? vec3(r.at("target")) : Vector3d(0, 0, 3), intr);
    }
    scene.splat_spacing = j.value("splat_spacing", scene.splat_spacing);
    scene.plane_extent = j.value("plane_extent", scene.plane_extent);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("scene spec: ") + e.what());
  }
  scene.validate();
  return scene;
}

nlohmann::ordered_json scene_to_json(const SyntheticScene& scene) {
  nlohmann::ordered_json j;
  if (const auto* plane = std::get_if<PlaneGeometry>(&scene.geometry)) {
    j["geometry"] = {{"type", "plane"}, {"z", plane->z}, {"tilt_deg", plane->tilt_deg}};
  } else {
    const auto& sphere = std::get<SphereGeometry>(scene.geometry);
    j["geometry"] = {{"type", "sphere"},
                     {"center", {sphere.center.x(), sphere.center.y(), sphere.center.z()}},
                     {"radius", sphere.radius}};
  }
  j["cameras"] = nlohmann::ordered_json::array();
  for (const auto& cam : scene.rig) j["cameras"].push_back(nlohmann::ordered_json::parse(camera_to_json_text(cam)));
  j["splat_spacing"] = scene.splat_spacing;
  j["plane_extent"] = scene.plane_extent;
  return j;
}

void synth_scene(const SyntheticScene& scene, const fs::path& out_dir) {
  scene.validate();
  fs::create_directories(out_dir);
  nlohmann::ordered_json index;
  nlohmann::ordered_json run;
  run["views"] = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < scene.rig.size(); ++k) {
    const Camera& cam = scene.rig[k];
    const std::string cam_file = numbered("cam", k, "json");
    const std::string depth_file = numbered("depth", k, "fwt");
    const std::string image_file = numbered("image", k, "fwt");
    save_camera(out_dir / cam_file, cam);
    save_tensor(out_dir / depth_file, to_tensor(scene.depth(cam)));
    save_tensor(out_dir / image_file, to_tensor(scene.texture(cam)));
    index["cameras"].push_back(cam_file);
    index["depths"].push_back(depth_file);
    index["images"].push_back(image_file);
    run["views"].push_back({{"id", view_id(k)},
                            {"camera", cam_file},
                            {"image", image_file}});
  }
  save_tensor(out_dir / "splats.fwt", splats_to_tensor(scene.sample_splats()));
  index["splats"] = "splats.fwt";

  run["source"] = "view_00";
  run["splats"] = "splats.fwt";
  run["plugin"] = {{"type", "identity"}};
  run["output_dir"] = "run_out";
  run["scene"] = "scene_spec.json";

  std::ofstream(out_dir / "scene.json") << index.dump(2) << "\n";
  std::ofstream(out_dir / "run.json") << run.dump(2) << "\n";
  const CameraIntrinsics& k0 = scene.rig.front().intrinsics;
  run["plugin"] = {{"type", "stamp"},
                   {"center", {k0.width / 2.0, k0.height / 2.0}},
                   {"radius", 0.28 * std::min(k0.width, k0.height)}};
  run["output_dir"] = "run_stamp_out";
  std::ofstream(out_dir / "run_stamp.json") << run.dump(2) << "\n";
  std::ofstream(out_dir / "scene_spec.json") << scene_to_json(scene).dump(2) << "\n";
  require(fs::exists(out_dir / "run.json"), ErrorKind::Io, "cannot write into " + out_dir.string());
}

// ---------------------------------------------------------------------------
// Stamp-edit test double

FeatureMap disk_indicator(int h, int w, int image_w, int image_h, const Vector2d& center, double radius) {
  FeatureMap f(1, h, w, 0.0f);
  const double sx = static_cast<double>(image_w) / w;
  const double sy = static_cast<double>(image_h) / h;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Vector2d p((x + 0.5) * sx, (y + 0.5) * sy);
      if ((p - center).norm() <= radius) f.at(0, y, x) = 1.0f;
    }
  return f;
}

StampEditor::StampEditor(Vector2d center, double radius, std::vector<int> resolutions)
    : center_(std::move(center)), radius_(radius), resolutions_(std::move(resolutions)) {
  require(radius_ > 0.0, ErrorKind::Config, "stamp radius must be positive");
  require(!resolutions_.empty(), ErrorKind::Config, "stamp needs at least one resolution");
}

EditResult StampEditor::edit(const EditRequest& request) {
  static constexpr float kPaint[3] = {1.0f, 0.15f, 0.15f};
  EditResult out{request.image, {}};
  FeatureMap& img = out.image;
  const int W = img.width;
  const int H = img.height;

  if (!request.warped) {
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        if ((pixel_center(x, y) - center_).norm() <= radius_)
          for (int c = 0; c < std::min(3, img.channels); ++c) img.at(c, y, x) = kPaint[c];
    for (int r : resolutions_) {
      FeatureMap ind = disk_indicator(r, r, W, H, center_, radius_);
      out.bundle.layers.push_back({"up_" + std::to_string(r), ind, ind});
    }
    return out;
  }

  // Region per layer: warped indicator gated by the visibility mask.
  const AttentionLayer* finest = nullptr;
  for (const auto& layer : request.warped->bundle.layers) {
    const FeatureMap& m = layer.self_attn;
    const Mask& vis = request.warped->masks.at({m.height, m.width});
    FeatureMap region(1, m.height, m.width, 0.0f);
    for (int y = 0; y < m.height; ++y)
      for (int x = 0; x < m.width; ++x)
        if (vis.at(x, y) * m.at(0, y, x) >= 0.5f) region.at(0, y, x) = 1.0f;
    out.bundle.layers.push_back({layer.id, region, region});
    if (!finest || m.width * m.height > finest->self_attn.width * finest->self_attn.height)
      finest = &out.bundle.layers.back();
  }
  if (finest) {
    const FeatureMap& region = finest->self_attn;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const int fx = static_cast<int>(static_cast<long long>(x) * region.width / W);
        const int fy = static_cast<int>(static_cast<long long>(y) * region.height / H);
        if (region.at(0, fy, fx) > 0.0f)
          for (int c = 0; c < std::min(3, img.channels); ++c) img.at(c, y, x) = kPaint[c];
      }
  }
  return out;
}

Mask reprojected_disk(const SyntheticScene& scene, const Camera& src, const Camera& tgt, int h, int w,
                      const Vector2d& center, double radius) {
  Mask out(w, h, 0.0f);
  const double sx = static_cast<double>(tgt.intrinsics.width) / w;
  const double sy = static_cast<double>(tgt.intrinsics.height) / h;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Vector2d pix((x + 0.5) * sx, (y + 0.5) * sy);
      const auto z = scene.ray_depth(tgt, pix);
      if (!z) continue;
      const Vector3d world = camera_to_world(unproject(pix, *z, tgt.intrinsics), tgt.extrinsics);
      const Vector3d in_src = world_to_camera(world, src.extrinsics);
      if (!(in_src.z() > 0.0)) continue;
      const Projection p = project(in_src, src.intrinsics);
      const bool inside = p.pixel.x() >= 0.0 && p.pixel.x() < src.intrinsics.width &&
                          p.pixel.y() >= 0.0 && p.pixel.y() < src.intrinsics.height;
      if (inside && (p.pixel - center).norm() <= radius) out.at(x, y) = 1.0f;
    }
  return out;
}

double mask_iou(const Mask& a, const Mask& b) {
  require(a.width == b.width && a.height == b.height, ErrorKind::DimensionMismatch,
          "mask_iou: sizes differ");
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const bool x = a.data[i] >= 0.5f;
    const bool y = b.data[i] >= 0.5f;
    inter += (x && y) ? 1 : 0;
    uni += (x || y) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double stamp_propagation_iou(const SyntheticScene& scene, const Camera& src, const Camera& tgt,
                             const WarpedBundle& warped, const Vector2d& center, double radius, int resolution) {
  const Resolution res{resolution, resolution};
  const auto mask_it = warped.masks.find(res);
  require(mask_it != warped.masks.end(), ErrorKind::Config,
          "warped bundle has no " + std::to_string(resolution) + " layer");
  const AttentionLayer* layer = nullptr;
  for (const auto& l : warped.bundle.layers)
    if (l.self_attn.height == resolution && l.self_attn.width == resolution) layer = &l;
  require(layer != nullptr, ErrorKind::Config, "warped bundle has no " + std::to_string(resolution) + " layer");
  Mask region(resolution, resolution, 0.0f);
  for (int y = 0; y < resolution; ++y)
    for (int x = 0; x < resolution; ++x)
      if (mask_it->second.at(x, y) * layer->self_attn.at(0, y, x) >= 0.5f) region.at(x, y) = 1.0f;
  return mask_iou(region, reprojected_disk(scene, src, tgt, resolution, resolution, center, radius));
}

}  // namespace attnwarp
