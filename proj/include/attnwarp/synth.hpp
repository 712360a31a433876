#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "attnwarp/geometry.hpp"
#include "attnwarp/grid.hpp"
#include "attnwarp/pipeline.hpp"
#include "attnwarp/splat.hpp"

namespace attnwarp {

/// Plane through (0, 0, z) whose normal is world +z tilted about the y axis.
struct PlaneGeometry {
  double z = 2.0;
  double tilt_deg = 0.0;

  Eigen::Vector3d normal() const;
};

struct SphereGeometry {
  Eigen::Vector3d center = Eigen::Vector3d(0, 0, 4);
  double radius = 1.0;
};

struct SyntheticScene {
  std::variant<PlaneGeometry, SphereGeometry> geometry = PlaneGeometry{};
  std::vector<Camera> rig;
  /// Distance between neighbouring splat samples; also their disk scale.
  double splat_spacing = 0.02;
  /// Half side of the square patch of plane that gets sampled.
  double plane_extent = 4.0;

  void validate() const;

  /// Depth along +z of the first surface hit through a continuous pixel.
  std::optional<double> ray_depth(const Camera& cam, const Eigen::Vector2d& pixel) const;
  DepthMap depth(const Camera& cam) const;
  SplatSet sample_splats() const;
  /// Procedural checker texture seen by `cam` as a [3,H,W] image in [0,1].
  FeatureMap texture(const Camera& cam) const;
};

/// `count` cameras on a horizontal arc of +-arc_deg around `target` at
/// distance `radius`, all looking at the target.
std::vector<Camera> arc_rig(int count, double arc_deg, double radius,
                            const Eigen::Vector3d& target, const CameraIntrinsics& intr);

/// Scene spec JSON:
///   {"geometry": {"type":"plane","z":2,"tilt_deg":0} |
///                {"type":"sphere","center":[x,y,z],"radius":r},
///    "cameras": [<camera json>...]  or
///    "rig": {"count":8,"arc_deg":20,"radius":3,"target":[0,0,3],
///            "intrinsics":{"fx","fy","cx","cy","width","height"}},
///    "splat_spacing": 0.02, "plane_extent": 4}
SyntheticScene scene_from_json(const nlohmann::json& j);
/// Inverse of scene_from_json, always with an explicit "cameras" list.
nlohmann::ordered_json scene_to_json(const SyntheticScene& scene);

/// Writes cam_XX.json, depth_XX.fwt, image_XX.fwt per rig camera plus
/// splats.fwt, scene.json (file index), scene_spec.json (the scene itself)
/// and run configs over the rig into `out_dir`: run.json with the identity
/// editor and run_stamp.json with a stamp centred in the first view.
void synth_scene(const SyntheticScene& scene, const std::filesystem::path& out_dir);

/// Disk indicator at feature resolution: pixel (x, y) of an h x w grid is 1
/// when its center, mapped to the full image, lies inside the disk.
FeatureMap disk_indicator(int h, int w, int image_w, int image_h, const Eigen::Vector2d& center,
                          double radius);

/// Test double for the diffusion model. On the source view it paints a disk
/// and reports the disk indicator as the self and cross attention of one
/// layer per resolution. On other views it paints where the warped
/// indicator (masked, at the finest resolution) is at least 0.5 and reports
/// that region.
class StampEditor final : public EditorPlugin {
 public:
  StampEditor(Eigen::Vector2d center, double radius, std::vector<int> resolutions = kDefaultResolutions);
  EditResult edit(const EditRequest& request) override;
  bool reentrant() const override { return true; }

 private:
  Eigen::Vector2d center_;
  double radius_;
  std::vector<int> resolutions_;
};

/// Analytic reprojection of the source disk into `tgt` at an h x w grid.
Mask reprojected_disk(const SyntheticScene& scene, const Camera& src, const Camera& tgt, int h,
                      int w, const Eigen::Vector2d& center, double radius);

/// Intersection over union of two binary masks thresholded at 0.5.
double mask_iou(const Mask& a, const Mask& b);

/// IoU between the warped stamp indicator of a target view (the self map of
/// the resolution x resolution layer, gated by its mask, thresholded at 0.5)
/// and the analytic reprojection of the source disk.
double stamp_propagation_iou(const SyntheticScene& scene, const Camera& src, const Camera& tgt,
                             const WarpedBundle& warped, const Eigen::Vector2d& center, double radius,
                             int resolution = 64);

}  // namespace attnwarp
