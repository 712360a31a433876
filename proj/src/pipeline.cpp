#include "attnwarp/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <set>
#include <thread>

#include "attnwarp/error.hpp"
#include "attnwarp/tensor_io.hpp"

namespace attnwarp {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string resolution_key(const Resolution& r) {
  return std::to_string(r.first) + "x" + std::to_string(r.second);
}

void require_unique_ids(const std::vector<ViewRecord>& records) {
  std::set<std::string> seen;
  for (const auto& r : records)
    require(seen.insert(r.id).second, ErrorKind::Config, "duplicate view id '" + r.id + "'");
}

std::size_t find_view(const std::vector<ViewRecord>& records, const std::string& id) {
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].id == id) return i;
  fail(ErrorKind::Config, "unknown view id '" + id + "'");
}

FeatureMap load_view_image(const ViewRecord& view) {
  FeatureMap img = feature_from_tensor(load_tensor(view.image));
  require(img.width == view.camera.intrinsics.width && img.height == view.camera.intrinsics.height,
          ErrorKind::DimensionMismatch, "image of view '" + view.id + "' does not match its camera");
  return img;
}

FeatureMap depth_as_feature(const DepthMap& d) {
  FeatureMap f(1, d.height, d.width);
  f.data = d.data;
  return f;
}

void check_plugin_bundle(const AttentionBundle& bundle, const PipelineOptions& opts,
                         const std::string& view) {
  try {
    bundle.validate(opts.allowed_resolutions);
  } catch (const Error& e) {
    fail(ErrorKind::Plugin, "editor returned an invalid bundle for view '" + view + "': " + e.what());
  }
}

void write_view_outputs(const fs::path& dir, const ViewOutput& out, const WarpField& field) {
  fs::create_directories(dir);
  save_tensor(dir / "edited.fwt", to_tensor(out.edited));
  std::vector<float> packed;
  packed.reserve(field.u.size() * 3);
  for (double u : field.u) packed.push_back(static_cast<float>(u));
  for (double v : field.v) packed.push_back(static_cast<float>(v));
  packed.insert(packed.end(), field.valid.data.begin(), field.valid.data.end());
  save_tensor(dir / "warp_field.fwt",
              Tensor({3u, static_cast<std::uint32_t>(field.height), static_cast<std::uint32_t>(field.width)},
                     std::move(packed)));
  for (const auto& [res, mask] : out.warped.masks)
    save_tensor(dir / ("mask_" + resolution_key(res) + ".fwt"), to_tensor(mask));
  save_bundle(dir / "bundle", out.warped.bundle);
}

}  // namespace

// ---------------------------------------------------------------------------
// Plugins

EditResult IdentityEditor::edit(const EditRequest& request) { return {request.image, {}}; }

CommandEditor::CommandEditor(std::string command, fs::path work_root)
    : command_(std::move(command)), work_root_(std::move(work_root)) {}

EditResult CommandEditor::edit(const EditRequest& request) {
  const fs::path dir = work_root_ / ("call_" + std::to_string(calls_++) + "_" + request.view_id);
  fs::remove_all(dir);
  fs::create_directories(dir);
  save_tensor(dir / "image.fwt", to_tensor(request.image));
  save_tensor(dir / "conditioning.fwt", to_tensor(request.conditioning));
  nlohmann::ordered_json req;
  req["view"] = request.view_id;
  req["prompt"] = request.prompt;
  req["step_budget"] = request.step_budget;
  req["warped"] = request.warped != nullptr;
  if (request.warped) {
    save_bundle(dir / "bundle", request.warped->bundle);
    fs::create_directories(dir / "masks");
    nlohmann::ordered_json masks = nlohmann::ordered_json::object();
    for (const auto& [res, mask] : request.warped->masks) {
      const std::string name = "mask_" + resolution_key(res) + ".fwt";
      save_tensor(dir / "masks" / name, to_tensor(mask));
      masks[resolution_key(res)] = "masks/" + name;
    }
    req["masks"] = masks;
  }
  {
    std::ofstream out(dir / "request.json");
    out << req.dump(2) << "\n";
  }

  std::string quoted = "'";
  for (char c : dir.string()) quoted += c == '\'' ? std::string("'\\''") : std::string(1, c);
  quoted += "'";
  const int rc = std::system((command_ + " " + quoted).c_str());
  require(rc == 0, ErrorKind::Plugin,
          "editor command failed with status " + std::to_string(rc) + " for view '" + request.view_id + "'");
  require(fs::exists(dir / "edited.fwt") && fs::exists(dir / "out_bundle" / "manifest.json"),
          ErrorKind::Plugin, "editor command did not write edited.fwt and out_bundle/");
  return {feature_from_tensor(load_tensor(dir / "edited.fwt")), load_bundle(dir / "out_bundle")};
}

// ---------------------------------------------------------------------------
// Subset selection

std::uint64_t CounterRng::mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t CounterRng::next() {
  ++counter_;
  return mix(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
}

std::uint64_t CounterRng::uniform(std::uint64_t n) {
  require(n > 0, ErrorKind::OutOfRange, "uniform draw needs a positive bound");
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t r = next();
    if (r >= threshold) return r % n;
  }
}

CounterRng CounterRng::split(std::uint64_t stream) const {
  return CounterRng(mix(key_ ^ mix(stream + 0x632BE59BD9B4E019ULL)));
}

void StageConfig::validate() const {
  require(num_stages >= 1, ErrorKind::Config, "num_stages must be at least 1");
  require(subset_size >= 1, ErrorKind::Config, "subset_size must be at least 1");
}

std::vector<std::string> select_subset(const std::vector<ViewRecord>& records, const StageConfig& cfg,
                                       int stage) {
  cfg.validate();
  require(stage >= 0 && stage < cfg.num_stages, ErrorKind::OutOfRange,
          "stage " + std::to_string(stage) + " outside [0, " + std::to_string(cfg.num_stages) + ")");
  require_unique_ids(records);
  std::vector<std::string> pool;
  for (const auto& r : records)
    if (!r.edited) pool.push_back(r.id);
  const std::size_t count = std::min<std::size_t>(cfg.subset_size, pool.size());
  CounterRng rng = CounterRng(cfg.seed).split(static_cast<std::uint64_t>(stage));
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

// ---------------------------------------------------------------------------
// Stages

DepthMap view_depth(const ViewRecord& view, const GeometryConfig& geometry) {
  if (view.depth_source == DepthSource::Precomputed) {
    DepthMap d = depth_from_tensor(load_tensor(view.depth_path));
    require(d.width == view.camera.intrinsics.width && d.height == view.camera.intrinsics.height,
            ErrorKind::Config, "depth file of view '" + view.id + "' does not match its camera");
    return d;
  }
  return render_depth(geometry.splats, view.camera);
}

DepthMap target_depth(const ViewRecord& target, const ViewRecord& source, const GeometryConfig& geometry) {
  if (target.depth_source == DepthSource::Precomputed) return view_depth(target, geometry);
  return render_depth(filter_splats(geometry.splats, source.camera, target.camera, geometry.filter),
                      target.camera);
}

SourceEdit edit_source(std::vector<ViewRecord>& records, const std::string& source_id,
                       EditorPlugin& plugin, const GeometryConfig& geometry, const PipelineOptions& opts) {
  require_unique_ids(records);
  ViewRecord& src = records[find_view(records, source_id)];
  const FeatureMap image = load_view_image(src);
  const FeatureMap conditioning = depth_as_feature(view_depth(src, geometry));
  EditResult result = plugin.edit({src.id, image, conditioning, opts.prompt, nullptr, opts.step_budget});
  check_plugin_bundle(result.bundle, opts, src.id);
  if (opts.output_dir) {
    const fs::path dir = *opts.output_dir / "source" / src.id;
    fs::create_directories(dir);
    save_tensor(dir / "edited.fwt", to_tensor(result.image));
    save_bundle(dir / "bundle", result.bundle);
  }
  src.edited = true;
  return {src.id, std::move(result.image), std::move(result.bundle)};
}

StageResult run_stage(std::vector<ViewRecord>& records, const SourceEdit& source,
                      const std::vector<std::string>& targets, EditorPlugin& plugin,
                      const GeometryConfig& geometry, const PipelineOptions& opts, int stage) {
  const auto t_stage = Clock::now();
  require_unique_ids(records);
  const ViewRecord& src = records[find_view(records, source.view_id)];
  std::set<std::string> seen;
  std::vector<std::size_t> target_idx;
  for (const auto& id : targets) {
    require(id != source.view_id, ErrorKind::Config, "source view '" + id + "' cannot be its own target");
    require(seen.insert(id).second, ErrorKind::Config, "view '" + id + "' selected twice");
    target_idx.push_back(find_view(records, id));
  }

  StageResult result;
  result.stage = stage;
  result.selected = targets;
  result.outputs.resize(targets.size());

  auto process = [&](std::size_t k) {
    const auto t0 = Clock::now();
    const ViewRecord& tgt = records[target_idx[k]];
    ViewOutput& out = result.outputs[k];
    out.view_id = tgt.id;
    try {
      const DepthMap depth = target_depth(tgt, src, geometry);
      const WarpField field = compute_warp_field(depth, tgt.camera, src.camera);
      out.warp_coverage = field.valid.coverage();
      out.warped = warp_bundle(source.bundle, field, opts.sampling);
      for (const auto& [res, mask] : out.warped.masks) out.mask_coverage[res] = mask.coverage();
      const FeatureMap image = load_view_image(tgt);
      const FeatureMap conditioning = depth_as_feature(depth);
      EditResult edited =
          plugin.edit({tgt.id, image, conditioning, opts.prompt, &out.warped, opts.step_budget});
      check_plugin_bundle(edited.bundle, opts, tgt.id);
      out.edited = std::move(edited.image);
      if (opts.output_dir)
        write_view_outputs(*opts.output_dir / ("stage_" + std::to_string(stage)) / tgt.id, out, field);
    } catch (const std::exception& e) {
      out.error = e.what();
    }
    out.elapsed_ms = ms_since(t0);
  };

  const int workers = plugin.reentrant() ? std::max(1, opts.plugin_parallelism) : 1;
  if (workers == 1 || targets.size() < 2) {
    for (std::size_t k = 0; k < targets.size(); ++k) process(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (int w = 0; w < std::min<int>(workers, static_cast<int>(targets.size())); ++w)
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < targets.size(); k = next++) process(k);
      });
  }

  for (std::size_t k = 0; k < targets.size(); ++k)
    if (!result.outputs[k].error) records[target_idx[k]].edited = true;
  result.elapsed_ms = ms_since(t_stage);
  return result;
}

nlohmann::ordered_json RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "attnwarp-run/1";
  j["seed"] = config.seed;
  j["num_stages"] = config.num_stages;
  j["subset_size"] = config.subset_size;
  j["source"] = source_id;
  j["stages"] = nlohmann::ordered_json::array();
  nlohmann::ordered_json errors = nlohmann::ordered_json::array();
  for (const StageResult& s : stages) {
    nlohmann::ordered_json js;
    js["stage"] = s.stage;
    js["views"] = s.selected;
    js["results"] = nlohmann::ordered_json::array();
    for (const ViewOutput& o : s.outputs) {
      nlohmann::ordered_json jo;
      jo["view"] = o.view_id;
      jo["status"] = o.error ? "error" : "ok";
      jo["error"] = o.error ? nlohmann::ordered_json(*o.error) : nlohmann::ordered_json(nullptr);
      jo["warp_coverage"] = o.warp_coverage;
      nlohmann::ordered_json cov = nlohmann::ordered_json::object();
      for (const auto& [res, c] : o.mask_coverage) cov[resolution_key(res)] = c;
      jo["mask_coverage"] = cov;
      if (record_timing) jo["time_ms"] = o.elapsed_ms;
      js["results"].push_back(jo);
      if (o.error) errors.push_back({{"stage", s.stage}, {"view", o.view_id}, {"error", *o.error}});
    }
    if (record_timing) js["time_ms"] = s.elapsed_ms;
    j["stages"].push_back(js);
  }
  j["errors"] = errors;
  if (record_timing) j["time_ms"] = elapsed_ms;
  return j;
}

RunManifest run_pipeline(std::vector<ViewRecord>& records, const std::string& source_id,
                         EditorPlugin& plugin, const StageConfig& cfg, const GeometryConfig& geometry,
                         const PipelineOptions& opts) {
  const auto t0 = Clock::now();
  cfg.validate();
  geometry.filter.validate();
  RunManifest manifest;
  manifest.config = cfg;
  manifest.source_id = source_id;
  manifest.record_timing = opts.record_timing;

  const SourceEdit source = edit_source(records, source_id, plugin, geometry, opts);
  for (int s = 0; s < cfg.num_stages; ++s) {
    const std::vector<std::string> subset = select_subset(records, cfg, s);
    StageResult stage = run_stage(records, source, subset, plugin, geometry, opts, s);
    if (opts.post_stage) opts.post_stage(stage, opts.losses);
    manifest.stages.push_back(std::move(stage));
  }
  manifest.elapsed_ms = ms_since(t0);
  return manifest;
}

}  // namespace attnwarp
