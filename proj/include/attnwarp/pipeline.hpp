#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "attnwarp/feature_warp.hpp"
#include "attnwarp/geometry.hpp"
#include "attnwarp/grid.hpp"
#include "attnwarp/losses.hpp"
#include "attnwarp/splat.hpp"

namespace attnwarp {

enum class DepthSource { RenderedFromSplats, Precomputed };

struct ViewRecord {
  std::string id;
  Camera camera;
  std::filesystem::path image;       // [3,H,W] .fwt
  DepthSource depth_source = DepthSource::RenderedFromSplats;
  std::filesystem::path depth_path;  // [H,W] .fwt when precomputed
  bool edited = false;
};

struct EditRequest {
  const std::string& view_id;
  const FeatureMap& image;
  /// Depth of the view as a 1 x H x W map (the depth-conditioned variant);
  /// guide-image editors may ignore it.
  const FeatureMap& conditioning;
  const std::string& prompt;
  /// Null while editing the source view.
  const WarpedBundle* warped = nullptr;
  int step_budget = 50;
};

struct EditResult {
  FeatureMap image;
  AttentionBundle bundle;
};

/// Stand-in for the diffusion model.
class EditorPlugin {
 public:
  virtual ~EditorPlugin() = default;
  virtual EditResult edit(const EditRequest& request) = 0;
  /// Plugins that are safe to call from several threads at once override this.
  virtual bool reentrant() const { return false; }
};

/// Returns the input image and an empty bundle.
class IdentityEditor final : public EditorPlugin {
 public:
  EditResult edit(const EditRequest& request) override;
  bool reentrant() const override { return true; }
};

/// Subprocess protocol. For each call a work directory is filled with
///   image.fwt, conditioning.fwt, request.json, [bundle/, masks/]
/// and `command <workdir>` is run through the shell. The command must leave
///   edited.fwt and out_bundle/
/// in the same directory and exit 0.
class CommandEditor final : public EditorPlugin {
 public:
  CommandEditor(std::string command, std::filesystem::path work_root);
  EditResult edit(const EditRequest& request) override;

 private:
  std::string command_;
  std::filesystem::path work_root_;
  int calls_ = 0;
};

/// Counter-based generator: the i-th draw of a stream with key k is
/// splitmix64_mix(k + (i + 1) * 0x9E3779B97F4A7C15). split(n) derives an
/// independent stream key as splitmix64_mix(k ^ splitmix64_mix(n + 0x632BE59BD9B4E019)).
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  static std::uint64_t mix(std::uint64_t z);

  std::uint64_t next();
  /// Unbiased draw in [0, n) by rejection.
  std::uint64_t uniform(std::uint64_t n);
  CounterRng split(std::uint64_t stream) const;
  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

struct StageConfig {
  int num_stages = 3;
  int subset_size = 40;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Uniform sample without replacement of size min(subset_size, #unedited)
/// from the unedited views, in draw order. Deterministic in (seed, stage,
/// ids). Does not mark anything edited.
std::vector<std::string> select_subset(const std::vector<ViewRecord>& records,
                                       const StageConfig& cfg, int stage);

struct GeometryConfig {
  SplatSet splats;
  FilterConfig filter;
};

struct SourceEdit {
  std::string view_id;
  FeatureMap image;
  AttentionBundle bundle;
};

struct ViewOutput {
  std::string view_id;
  std::optional<std::string> error;
  FeatureMap edited;
  WarpedBundle warped;
  double warp_coverage = 0.0;
  std::map<Resolution, double> mask_coverage;
  double elapsed_ms = 0.0;
};

struct StageResult {
  int stage = 0;
  std::vector<std::string> selected;
  std::vector<ViewOutput> outputs;
  double elapsed_ms = 0.0;
};

/// Handed to the post-stage fine-tuning hook; the optimizer lives elsewhere.
struct LossKernels {
  ImageLossWeights image_weights;
  std::function<double(const FeatureMap&, const FeatureMap&)> l1 =
      [](const FeatureMap& a, const FeatureMap& b) { return l1_loss(a, b); };
  std::function<double(const RayIntersections&, const NormalMap&)> normal_consistency =
      normal_consistency_loss;
  std::function<double(const RayIntersections&)> depth_distortion = depth_distortion_loss;
};

struct PipelineOptions {
  std::string prompt;
  int step_budget = 50;
  Sampling sampling = Sampling::Bilinear;
  std::vector<int> allowed_resolutions = kDefaultResolutions;
  /// When set, every view's edited image, warp field, masks and warped bundle
  /// are written under <output_dir>/stage_<s>/<view>/, and the source edit
  /// and its bundle under <output_dir>/source/<view>/.
  std::optional<std::filesystem::path> output_dir;
  /// Maximum concurrent plugin calls; values above 1 only apply to
  /// reentrant plugins.
  int plugin_parallelism = 1;
  bool record_timing = true;
  LossKernels losses;
  std::function<void(const StageResult&, const LossKernels&)> post_stage;
};

/// Depth of a view on its own: its depth file, or all splats rendered into it.
DepthMap view_depth(const ViewRecord& view, const GeometryConfig& geometry);

/// Edits the source view and captures its attention bundle. Marks it edited.
SourceEdit edit_source(std::vector<ViewRecord>& records, const std::string& source_id,
                       EditorPlugin& plugin, const GeometryConfig& geometry,
                       const PipelineOptions& opts);

/// Target depth used for warping: rendered from the normal-filtered splats or
/// loaded from the view's depth file.
DepthMap target_depth(const ViewRecord& target, const ViewRecord& source,
                      const GeometryConfig& geometry);

/// Warps the source bundle into each target and runs the plugin. A plugin
/// failure is recorded on that view, which stays unedited. Throws Config if
/// `targets` contains the source or an unknown id.
StageResult run_stage(std::vector<ViewRecord>& records, const SourceEdit& source,
                      const std::vector<std::string>& targets, EditorPlugin& plugin,
                      const GeometryConfig& geometry, const PipelineOptions& opts, int stage = 0);

struct RunManifest {
  StageConfig config;
  std::string source_id;
  std::vector<StageResult> stages;
  double elapsed_ms = 0.0;
  bool record_timing = true;

  nlohmann::ordered_json to_json() const;
};

RunManifest run_pipeline(std::vector<ViewRecord>& records, const std::string& source_id,
                         EditorPlugin& plugin, const StageConfig& cfg,
                         const GeometryConfig& geometry, const PipelineOptions& opts);

}  // namespace attnwarp
