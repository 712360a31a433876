#include "attnwarp/run_config.hpp"

#include <fstream>
#include <set>

#include "attnwarp/error.hpp"
#include "attnwarp/synth.hpp"
#include "attnwarp/tensor_io.hpp"

namespace attnwarp {

namespace fs = std::filesystem;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::unique_ptr<EditorPlugin> make_plugin(const nlohmann::json& j, const fs::path& base) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "identity") return std::make_unique<IdentityEditor>();
  if (type == "stamp") {
    const auto c = j.at("center").get<std::vector<double>>();
    require(c.size() == 2, ErrorKind::Config, "stamp center must have two entries");
    return std::make_unique<StampEditor>(Eigen::Vector2d(c[0], c[1]), j.at("radius").get<double>(),
                                         j.value("resolutions", kDefaultResolutions));
  }
  if (type == "command") {
    return std::make_unique<CommandEditor>(j.at("command").get<std::string>(),
                                           resolve(base, j.value("work_dir", std::string("plugin_work"))));
  }
  fail(ErrorKind::Config, "unknown plugin type '" + type + "'");
}

}  // namespace

RunSetup run_setup_from_json(const nlohmann::json& j, const fs::path& base_dir) {
  RunSetup setup;
  try {
    std::set<std::string> seen;
    for (const auto& v : j.at("views")) {
      ViewRecord rec;
      rec.id = v.at("id").get<std::string>();
      require(seen.insert(rec.id).second, ErrorKind::Config, "duplicate view id '" + rec.id + "'");
      rec.camera = load_camera(resolve(base_dir, v.at("camera").get<std::string>()));
      rec.image = resolve(base_dir, v.at("image").get<std::string>());
      if (v.contains("depth")) {
        rec.depth_source = DepthSource::Precomputed;
        rec.depth_path = resolve(base_dir, v.at("depth").get<std::string>());
      }
      setup.records.push_back(std::move(rec));
    }
    setup.source_id = j.at("source").get<std::string>();
    require(seen.count(setup.source_id) == 1, ErrorKind::Config,
            "source '" + setup.source_id + "' is not a listed view");

    if (j.contains("splats"))
      setup.geometry.splats = splats_from_tensor(load_tensor(resolve(base_dir, j.at("splats").get<std::string>())));
    setup.geometry.filter.theta_max_deg = j.value("theta_max_deg", setup.geometry.filter.theta_max_deg);
    setup.geometry.filter.validate();

    setup.stages.num_stages = j.value("stages", setup.stages.num_stages);
    setup.stages.subset_size = j.value("subset_size", setup.stages.subset_size);
    setup.stages.seed = j.value("seed", setup.stages.seed);
    setup.stages.validate();

    PipelineOptions& o = setup.options;
    o.prompt = j.value("prompt", std::string());
    o.step_budget = j.value("step_budget", o.step_budget);
    o.sampling = sampling_from_string(j.value("sampling", std::string("bilinear")));
    o.allowed_resolutions = j.value("resolutions", o.allowed_resolutions);
    if (j.contains("output_dir")) o.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
    o.plugin_parallelism = j.value("plugin_parallelism", o.plugin_parallelism);
    o.record_timing = j.value("record_timing", o.record_timing);
    require(o.plugin_parallelism >= 1, ErrorKind::Config, "plugin_parallelism must be at least 1");

    const nlohmann::json plugin = j.value("plugin", nlohmann::json{{"type", "identity"}});
    setup.plugin = make_plugin(plugin, base_dir);
    if (plugin.at("type") == "stamp") {
      const auto c = plugin.at("center").get<std::vector<double>>();
      setup.stamp = RunSetup::Stamp{{c[0], c[1]}, plugin.at("radius").get<double>()};
    }
    if (j.contains("scene")) {
      const fs::path scene_path = resolve(base_dir, j.at("scene").get<std::string>());
      std::ifstream in(scene_path);
      require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + scene_path.string());
      setup.scene = scene_from_json(nlohmann::json::parse(in));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("run config: ") + e.what());
  }
  for (const auto& rec : setup.records)
    require(rec.depth_source == DepthSource::Precomputed || !setup.geometry.splats.empty(),
            ErrorKind::Config, "view '" + rec.id + "' has no depth file and no splats were given");
  return setup;
}

RunSetup load_run_config(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, "run config " + path.string() + ": " + e.what());
  }
  return run_setup_from_json(j, path.parent_path());
}

}  // namespace attnwarp
