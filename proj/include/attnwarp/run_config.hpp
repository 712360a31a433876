#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "attnwarp/pipeline.hpp"
#include "attnwarp/synth.hpp"

namespace attnwarp {

/// Everything `run_pipeline` needs, loaded from a run config file.
///
///   {"views": [{"id", "camera": "<file>", "image": "<file>", "depth": "<file>"?}],
///    "source": "<id>",
///    "splats": "<file>"?, "theta_max_deg": 60,
///    "stages": 3, "subset_size": 40, "seed": 0,
///    "prompt": "", "step_budget": 50, "sampling": "bilinear",
///    "plugin": {"type": "identity"} |
///              {"type": "stamp", "center": [x, y], "radius": r, "resolutions": [32, 64]} |
///              {"type": "command", "command": "...", "work_dir": "<dir>"},
///    "output_dir": "<dir>"?, "plugin_parallelism": 1, "record_timing": true,
///    "scene": "<scene spec file>"?}
///
/// Relative paths resolve against the config file's directory. A view
/// without "depth" gets its depth rendered from the splats. "scene" names
/// the synthetic scene the views came from; with the stamp plugin it lets a
/// run score propagation against the analytic reprojection.
struct RunSetup {
  std::vector<ViewRecord> records;
  std::string source_id;
  StageConfig stages;
  GeometryConfig geometry;
  PipelineOptions options;
  std::unique_ptr<EditorPlugin> plugin;

  struct Stamp {
    Eigen::Vector2d center;
    double radius;
  };
  std::optional<Stamp> stamp;
  std::optional<SyntheticScene> scene;
};

RunSetup run_setup_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunSetup load_run_config(const std::filesystem::path& path);

}  // namespace attnwarp
