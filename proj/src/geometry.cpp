#include "attnwarp/geometry.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <Eigen/Geometry>
#include <json.hpp>

#include "attnwarp/error.hpp"

namespace attnwarp {

using Eigen::Matrix3d;
using Eigen::Vector2d;
using Eigen::Vector3d;

void CameraIntrinsics::validate() const {
  require(std::isfinite(fx) && std::isfinite(fy) && std::isfinite(cx) && std::isfinite(cy),
          ErrorKind::NonFinite, "camera intrinsics must be finite");
  require(width >= 1 && height >= 1, ErrorKind::Config, "image size must be at least 1x1");
  require(fx > 0.0 && fy > 0.0, ErrorKind::Config, "focal lengths must be positive");
  require(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height, ErrorKind::Config,
          "principal point must lie inside the image");
}

CameraExtrinsics CameraExtrinsics::from_rt(const Matrix3d& rotation, const Vector3d& translation) {
  CameraExtrinsics e;
  e.world_to_camera.setIdentity();
  e.world_to_camera.topLeftCorner<3, 3>() = rotation;
  e.world_to_camera.topRightCorner<3, 1>() = translation;
  return e;
}

CameraExtrinsics CameraExtrinsics::look_at(const Vector3d& center, const Vector3d& target,
                                           const Vector3d& up) {
  const Vector3d z = (target - center).normalized();
  const Vector3d x = (-up).cross(z).normalized();
  const Vector3d y = z.cross(x);
  Matrix3d r;
  r.row(0) = x.transpose();
  r.row(1) = y.transpose();
  r.row(2) = z.transpose();
  return from_rt(r, -r * center);
}

void CameraExtrinsics::validate() const {
  require(world_to_camera.allFinite(), ErrorKind::NonFinite, "extrinsics must be finite");
  const Matrix3d r = rotation();
  require((r.transpose() * r - Matrix3d::Identity()).cwiseAbs().maxCoeff() <= 1e-6,
          ErrorKind::Config, "extrinsic rotation block is not orthonormal");
  require(std::abs(r.determinant() - 1.0) <= 1e-6, ErrorKind::Config,
          "extrinsic rotation block must have determinant +1");
  require(world_to_camera(3, 0) == 0.0 && world_to_camera(3, 1) == 0.0 &&
              world_to_camera(3, 2) == 0.0 && world_to_camera(3, 3) == 1.0,
          ErrorKind::Config, "extrinsic last row must be (0,0,0,1)");
}

Vector3d unproject(const Vector2d& pixel, double depth, const CameraIntrinsics& intr) {
  if (!(depth > 0.0)) fail(ErrorKind::InvalidSample, "unproject needs a positive depth");
  return {(pixel.x() - intr.cx) / intr.fx * depth, (pixel.y() - intr.cy) / intr.fy * depth, depth};
}

Projection project(const Vector3d& point, const CameraIntrinsics& intr) {
  if (point.z() == 0.0) fail(ErrorKind::ProjectionSingularity, "point lies on the camera plane");
  Projection p;
  p.pixel = {intr.fx * point.x() / point.z() + intr.cx, intr.fy * point.y() / point.z() + intr.cy};
  p.depth = point.z();
  return p;
}

Vector3d camera_to_world(const Vector3d& point, const CameraExtrinsics& extr) {
  return extr.rotation().transpose() * (point - extr.translation());
}

Vector3d world_to_camera(const Vector3d& point, const CameraExtrinsics& extr) {
  return extr.rotation() * point + extr.translation();
}

WarpField::WarpField(int w, int h, int sw, int sh)
    : width(w),
      height(h),
      src_width(sw),
      src_height(sh),
      u(static_cast<std::size_t>(w) * h, std::numeric_limits<double>::quiet_NaN()),
      v(static_cast<std::size_t>(w) * h, std::numeric_limits<double>::quiet_NaN()),
      valid(w, h, 0.0f) {}

WarpField compute_warp_field(const DepthMap& tgt_depth, const Camera& tgt_cam, const Camera& src_cam) {
  tgt_cam.validate();
  src_cam.validate();
  const CameraIntrinsics& kt = tgt_cam.intrinsics;
  const CameraIntrinsics& ks = src_cam.intrinsics;
  require(tgt_depth.width == kt.width && tgt_depth.height == kt.height, ErrorKind::Config,
          "target depth size does not match target intrinsics");
  tgt_depth.validate();

  WarpField field(kt.width, kt.height, ks.width, ks.height);
  const Matrix3d r_tgt = tgt_cam.extrinsics.rotation();
  const Vector3d t_tgt = tgt_cam.extrinsics.translation();
  const Matrix3d r_src = src_cam.extrinsics.rotation();
  const Vector3d t_src = src_cam.extrinsics.translation();

  // Rows are independent; each pixel is written by exactly one iteration.
#pragma omp parallel for schedule(static)
  for (int y = 0; y < kt.height; ++y) {
    for (int x = 0; x < kt.width; ++x) {
      const double d = tgt_depth.at(x, y);
      if (!(d > 0.0)) continue;
      const Vector3d p_tgt = unproject(pixel_center(x, y), d, kt);
      const Vector3d p_world = r_tgt.transpose() * (p_tgt - t_tgt);
      const Vector3d p_src = r_src * p_world + t_src;
      if (p_src.z() == 0.0) continue;
      const Projection proj = project(p_src, ks);
      const std::size_t i = field.index(x, y);
      field.u[i] = proj.pixel.x();
      field.v[i] = proj.pixel.y();
      field.valid.data[i] =
          (proj.in_front() && field.in_source(proj.pixel.x(), proj.pixel.y())) ? 1.0f : 0.0f;
    }
  }
  return field;
}

// ---------------------------------------------------------------------------
// JSON

Camera camera_from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("camera JSON: ") + e.what());
  }
  require(j.is_object(), ErrorKind::Config, "camera JSON must be an object");
  static const std::set<std::string> known = {"fx", "fy", "cx", "cy", "width", "height",
                                              "world_to_camera"};
  for (const auto& [key, _] : j.items())
    require(known.count(key) > 0, ErrorKind::Config, "camera JSON: unknown field '" + key + "'");
  for (const auto& key : known)
    require(j.contains(key), ErrorKind::Config, "camera JSON: missing field '" + key + "'");

  Camera cam;
  try {
    cam.intrinsics.fx = j.at("fx").get<double>();
    cam.intrinsics.fy = j.at("fy").get<double>();
    cam.intrinsics.cx = j.at("cx").get<double>();
    cam.intrinsics.cy = j.at("cy").get<double>();
    cam.intrinsics.width = j.at("width").get<int>();
    cam.intrinsics.height = j.at("height").get<int>();
    const auto m = j.at("world_to_camera").get<std::vector<double>>();
    require(m.size() == 16, ErrorKind::Config, "world_to_camera must have 16 numbers");
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) cam.extrinsics.world_to_camera(r, c) = m[4 * r + c];
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("camera JSON: ") + e.what());
  }
  cam.validate();
  return cam;
}

std::string camera_to_json_text(const Camera& cam) {
  nlohmann::ordered_json j;
  j["fx"] = cam.intrinsics.fx;
  j["fy"] = cam.intrinsics.fy;
  j["cx"] = cam.intrinsics.cx;
  j["cy"] = cam.intrinsics.cy;
  j["width"] = cam.intrinsics.width;
  j["height"] = cam.intrinsics.height;
  std::vector<double> m(16);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m[4 * r + c] = cam.extrinsics.world_to_camera(r, c);
  j["world_to_camera"] = m;
  return j.dump(2) + "\n";
}

Camera load_camera(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open camera file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return camera_from_json_text(ss.str());
}

void save_camera(const std::filesystem::path& path, const Camera& cam) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write camera file " + path.string());
  out << camera_to_json_text(cam);
}

}  // namespace attnwarp
