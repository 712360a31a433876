// fwarp: command-line front end for the attnwarp library.
//
// Every command reads and writes .fwt tensors and camera JSON files. On any
// failure it prints {"error": <kind>, "message": <text>} to stderr and exits
// with status 2.

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "attnwarp/blending.hpp"
#include "attnwarp/error.hpp"
#include "attnwarp/feature_warp.hpp"
#include "attnwarp/geometry.hpp"
#include "attnwarp/run_config.hpp"
#include "attnwarp/splat.hpp"
#include "attnwarp/synth.hpp"
#include "attnwarp/tensor_io.hpp"
#include "png_export.hpp"

namespace {

using namespace attnwarp;
namespace fs = std::filesystem;

constexpr int kExitError = 2;

void print_error(std::string_view kind, const std::string& message) {
  nlohmann::ordered_json j;
  j["error"] = kind;
  j["message"] = message;
  std::cerr << j.dump() << "\n";
}

/// "HxW" -> (h, w).
Resolution parse_size(const std::string& s) {
  const auto x = s.find('x');
  require(x != std::string::npos, ErrorKind::Config, "size must look like HxW, got '" + s + "'");
  try {
    const int h = std::stoi(s.substr(0, x));
    const int w = std::stoi(s.substr(x + 1));
    require(h >= 1 && w >= 1, ErrorKind::Config, "size must be positive");
    return {h, w};
  } catch (const std::logic_error&) {
    fail(ErrorKind::Config, "size must look like HxW, got '" + s + "'");
  }
}

FeatureMap mask_as_feature(const Mask& m) {
  FeatureMap f(1, m.height, m.width);
  f.data = m.data;
  return f;
}

void write_json(const nlohmann::ordered_json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path);
  out << j.dump(2) << "\n";
}

struct FieldArgs {
  std::string src_camera, tgt_camera, depth;

  void add(CLI::App* cmd) {
    cmd->add_option("--src-camera", src_camera, "Source camera JSON")->required();
    cmd->add_option("--tgt-camera", tgt_camera, "Target camera JSON")->required();
    cmd->add_option("--depth", depth, "Target depth [H,W] .fwt")->required();
  }

  WarpField compute() const {
    return compute_warp_field(depth_from_tensor(load_tensor(depth)), load_camera(tgt_camera),
                              load_camera(src_camera));
  }
};

// ---------------------------------------------------------------------------

struct WarpCmd {
  FieldArgs field;
  std::string input, output, mask_out, sampling = "bilinear";

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("warp", "Warp a source feature tensor into the target view");
    field.add(cmd);
    cmd->add_option("--input", input, "Source feature tensor [C,h,w] or [h,w]")->required();
    cmd->add_option("--output", output, "Warped tensor")->required();
    cmd->add_option("--mask", mask_out, "Also write the sampling mask [h,w]");
    cmd->add_option("--sampling", sampling, "bilinear | nearest")->check(CLI::IsMember({"bilinear", "nearest"}));
    cmd->callback([this] { run(); });
  }

  void run() const {
    WarpField f = field.compute();
    const FeatureMap src = feature_from_tensor(load_tensor(input));
    // Feature maps smaller than the source image are warped on a grid of
    // their own size in both views.
    if (src.width != f.src_width || src.height != f.src_height)
      f = resample_warp_field(f, src.height, src.width, src.height, src.width);
    const WarpedFeatures w = warp_feature_map(src, f, sampling_from_string(sampling));
    save_tensor(output, to_tensor(w.features));
    if (!mask_out.empty()) save_tensor(mask_out, to_tensor(w.mask));
  }
};

struct MaskCmd {
  FieldArgs field;
  std::string output, size, png;

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("mask", "Write the target-view validity mask");
    field.add(cmd);
    cmd->add_option("--output", output, "Mask [H,W] .fwt")->required();
    cmd->add_option("--size", size, "Resample to HxW (feature resolution)");
    cmd->add_option("--png", png, "Also export an 8-bit PNG");
    cmd->callback([this] { run(); });
  }

  void run() const {
    WarpField f = field.compute();
    if (!size.empty()) {
      const auto [h, w] = parse_size(size);
      f = resample_warp_field(f, h, w, h, w);
    }
    save_tensor(output, to_tensor(f.valid));
    if (!png.empty()) fwarp::write_png(png, mask_as_feature(f.valid), false);
  }
};

struct RenderDepthCmd {
  std::string splats, camera, filter_camera, output, png;
  double theta_max = FilterConfig{}.theta_max_deg;

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("render-depth", "Z-buffer depth of a splat table");
    cmd->add_option("--splats", splats, "Splat table [N,9] .fwt")->required();
    cmd->add_option("--camera", camera, "Camera to render")->required();
    cmd->add_option("--filter-camera", filter_camera, "Drop splats whose normals disagree with this view");
    cmd->add_option("--theta-max", theta_max, "Normal angle threshold in degrees");
    cmd->add_option("--output", output, "Depth [H,W] .fwt")->required();
    cmd->add_option("--png", png, "Also export a normalized PNG");
    cmd->callback([this] { run(); });
  }

  void run() const {
    SplatSet set = splats_from_tensor(load_tensor(splats));
    const Camera cam = load_camera(camera);
    if (!filter_camera.empty()) set = filter_splats(set, load_camera(filter_camera), cam, FilterConfig{theta_max});
    const DepthMap d = render_depth(set, cam);
    save_tensor(output, to_tensor(d));
    if (!png.empty()) {
      FeatureMap f(1, d.height, d.width);
      f.data = d.data;
      fwarp::write_png(png, f, true);
    }
  }
};

struct BlendCmd {
  std::string warped, fresh, mask, output;
  std::optional<double> alpha, alpha0;
  std::optional<std::int64_t> t, total;

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("blend", "Masked blend of warped and fresh tensors");
    cmd->add_option("--warped", warped, "Warped tensor")->required();
    cmd->add_option("--fresh", fresh, "Freshly computed tensor")->required();
    cmd->add_option("--mask", mask, "Mask [H,W]")->required();
    cmd->add_option("--output", output, "Blended tensor")->required();
    auto* a = cmd->add_option("--alpha", alpha, "Blend coefficient in [0,1]");
    auto* ts = cmd->add_option("--t", t, "Step index (with --T)");
    auto* tt = cmd->add_option("--T", total, "Total steps (with --t)");
    cmd->add_option("--alpha0", alpha0, "Initial coefficient for --t/--T (default 0.9)");
    a->excludes(ts)->excludes(tt);
    cmd->callback([this] { run(); });
  }

  void run() const {
    double a = 0.0;
    if (alpha) {
      a = *alpha;
    } else {
      require(t.has_value() && total.has_value(), ErrorKind::Config, "blend needs --alpha or both --t and --T");
      a = alpha_at(BlendSchedule{alpha0.value_or(BlendSchedule{}.alpha0), *total}, *t);
    }
    const FeatureMap out = blend_masked(feature_from_tensor(load_tensor(warped)),
                                        feature_from_tensor(load_tensor(fresh)),
                                        mask_from_tensor(load_tensor(mask)), a);
    save_tensor(output, to_tensor(out));
  }
};

struct SynthCmd {
  std::string spec, out;

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("synth", "Generate a synthetic scene from a spec JSON");
    cmd->add_option("--spec", spec, "Scene spec JSON")->required();
    cmd->add_option("--out", out, "Output directory")->required();
    cmd->callback([this] { run(); });
  }

  void run() const {
    std::ifstream in(spec);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + spec);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Config, "scene spec: " + std::string(e.what()));
    }
    synth_scene(scene_from_json(j), out);
  }
};

struct RunCmd {
  std::string config, manifest;
  bool no_timing = false;

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("run", "Run the staged editing pipeline");
    cmd->add_option("--config", config, "Run config JSON")->required();
    cmd->add_option("--manifest", manifest, "Manifest path (default: stdout)");
    cmd->add_flag("--no-timing", no_timing, "Leave timings out of the manifest");
    cmd->callback([this] { run(); });
  }

  void run() const {
    RunSetup setup = load_run_config(config);
    if (no_timing) setup.options.record_timing = false;
    const RunManifest m = run_pipeline(setup.records, setup.source_id, *setup.plugin, setup.stages,
                                       setup.geometry, setup.options);
    nlohmann::ordered_json j = m.to_json();

    if (setup.stamp && setup.scene) {
      auto camera_of = [&](const std::string& id) -> const Camera& {
        for (const auto& r : setup.records)
          if (r.id == id) return r.camera;
        fail(ErrorKind::Config, "unknown view '" + id + "'");
      };
      double worst = 1.0;
      for (std::size_t s = 0; s < m.stages.size(); ++s)
        for (std::size_t k = 0; k < m.stages[s].outputs.size(); ++k) {
          const ViewOutput& o = m.stages[s].outputs[k];
          if (o.error) continue;
          const double iou = stamp_propagation_iou(*setup.scene, camera_of(setup.source_id),
                                                   camera_of(o.view_id), o.warped, setup.stamp->center,
                                                   setup.stamp->radius);
          j["stages"][s]["results"][k]["stamp_iou"] = iou;
          worst = std::min(worst, iou);
        }
      j["stamp_iou_min"] = worst;
    }

    if (setup.options.output_dir) write_json(j, (*setup.options.output_dir / "manifest.json").string());
    write_json(j, manifest);
  }
};

struct EvalCmd {
  std::string a, b;

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("eval", "Compare two tensors (L1, max-abs, PSNR with peak 1)");
    cmd->add_option("a", a, "First tensor")->required();
    cmd->add_option("b", b, "Second tensor")->required();
    cmd->callback([this] { run(); });
  }

  void run() const {
    const Tensor ta = load_tensor(a), tb = load_tensor(b);
    require(ta.dims == tb.dims, ErrorKind::DimensionMismatch, "tensors differ in shape");
    double sum_abs = 0.0, sum_sq = 0.0, max_abs = 0.0;
    for (std::size_t i = 0; i < ta.data.size(); ++i) {
      const double d = static_cast<double>(ta.data[i]) - tb.data[i];
      require(std::isfinite(d), ErrorKind::NonFinite, "tensors hold non-finite values");
      sum_abs += std::abs(d);
      sum_sq += d * d;
      max_abs = std::max(max_abs, std::abs(d));
    }
    const double n = static_cast<double>(std::max<std::size_t>(1, ta.data.size()));
    nlohmann::ordered_json j;
    j["l1"] = sum_abs / n;
    j["max_abs"] = max_abs;
    const double mse = sum_sq / n;
    if (mse == 0.0)
      j["psnr"] = "inf";
    else
      j["psnr"] = 10.0 * std::log10(1.0 / mse);
    std::cout << j.dump(2) << "\n";
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fwarp: depth-based attention feature warping"};
  app.require_subcommand(1);
  WarpCmd warp;
  MaskCmd mask;
  RenderDepthCmd render;
  BlendCmd blend;
  SynthCmd synth;
  RunCmd run;
  EvalCmd eval;
  warp.add(app);
  mask.add(app);
  render.add(app);
  blend.add(app);
  synth.add(app);
  run.add(app);
  eval.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("Usage", e.what());
    return kExitError;
  } catch (const Error& e) {
    print_error(e.name(), e.what());
    return kExitError;
  } catch (const std::exception& e) {
    print_error("Internal", e.what());
    return kExitError;
  }
  return 0;
}
