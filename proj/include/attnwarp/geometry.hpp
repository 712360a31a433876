#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "attnwarp/grid.hpp"

namespace attnwarp {

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  void validate() const;
  double mean_focal() const { return 0.5 * (fx + fy); }
};

/// Rigid world->camera transform, right-handed, camera looking down +z.
struct CameraExtrinsics {
  Eigen::Matrix4d world_to_camera = Eigen::Matrix4d::Identity();

  static CameraExtrinsics from_rt(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation);
  /// Camera at `center` looking at `target`; image y points along -up.
  static CameraExtrinsics look_at(const Eigen::Vector3d& center, const Eigen::Vector3d& target,
                                  const Eigen::Vector3d& up = Eigen::Vector3d(0, -1, 0));

  Eigen::Matrix3d rotation() const { return world_to_camera.topLeftCorner<3, 3>(); }
  Eigen::Vector3d translation() const { return world_to_camera.topRightCorner<3, 1>(); }
  Eigen::Vector3d center() const { return -rotation().transpose() * translation(); }

  void validate() const;
};

struct Camera {
  CameraIntrinsics intrinsics;
  CameraExtrinsics extrinsics;

  void validate() const {
    intrinsics.validate();
    extrinsics.validate();
  }
};

struct Projection {
  Eigen::Vector2d pixel;
  double depth = 0.0;
  bool in_front() const { return depth > 0.0; }
};

/// Continuous image coordinate of the center of integer pixel (x, y).
inline Eigen::Vector2d pixel_center(int x, int y) { return {x + 0.5, y + 0.5}; }

/// Back-projects a continuous pixel coordinate at metric depth into the camera
/// frame. Throws InvalidSample for depth <= 0.
Eigen::Vector3d unproject(const Eigen::Vector2d& pixel, double depth, const CameraIntrinsics& intr);

/// Pinhole projection; depth <= 0 means behind the camera. Throws
/// ProjectionSingularity when z == 0.
Projection project(const Eigen::Vector3d& point, const CameraIntrinsics& intr);

Eigen::Vector3d camera_to_world(const Eigen::Vector3d& point, const CameraExtrinsics& extr);
Eigen::Vector3d world_to_camera(const Eigen::Vector3d& point, const CameraExtrinsics& extr);

/// Backward warp field: indexed by target pixels, each entry holds the
/// continuous source-image coordinate that target pixel sees.
struct WarpField {
  int width = 0;   // target grid
  int height = 0;
  int src_width = 0;
  int src_height = 0;
  std::vector<double> u;
  std::vector<double> v;
  Mask valid;

  WarpField() = default;
  WarpField(int w, int h, int sw, int sh);

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }

  /// The bound check that defines validity: inside [0,W_src) x [0,H_src).
  bool in_source(double su, double sv) const {
    return su >= 0.0 && su < src_width && sv >= 0.0 && sv < src_height;
  }
};

/// Unprojects every target pixel with positive depth, moves it through world
/// space into the source camera and projects it. Invalid where the target
/// depth is zero, the point lands behind the source camera or outside the
/// source image. Throws Config when the depth size differs from the target
/// intrinsics.
WarpField compute_warp_field(const DepthMap& tgt_depth, const Camera& tgt_cam, const Camera& src_cam);

// JSON camera files: {"fx","fy","cx","cy","width","height","world_to_camera":[16]}
Camera camera_from_json_text(const std::string& text);
std::string camera_to_json_text(const Camera& cam);
Camera load_camera(const std::filesystem::path& path);
void save_camera(const std::filesystem::path& path, const Camera& cam);

}  // namespace attnwarp
