// Acceptance suite: one PASS/FAIL line per criterion, exit status = failures.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "attnwarp/blending.hpp"
#include "attnwarp/feature_warp.hpp"
#include "attnwarp/losses.hpp"
#include "attnwarp/pipeline.hpp"
#include "attnwarp/synth.hpp"
#include "attnwarp/tensor_io.hpp"
#include "support.hpp"

using namespace attnwarp;
using namespace testsupport;
using Eigen::Matrix3d;
using Eigen::Vector2d;
using Eigen::Vector3d;

namespace {

// Pinned tolerances.
constexpr double kIdentityTol = 1e-6;
constexpr double kIdentitySeconds = 1.0;
constexpr double kDisparityTol = 0.01;
constexpr double kRoundTripTol = 1e-3;
constexpr double kLossTol = 1e-9;
constexpr double kGradTol = 1e-4;
constexpr double kStampIou = 0.95;
constexpr double kStampSeconds = 60.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

CameraIntrinsics square_intrinsics(int size, double f) {
  CameraIntrinsics k;
  k.width = k.height = size;
  k.fx = k.fy = f;
  k.cx = k.cy = size / 2.0;
  return k;
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

SyntheticScene plane_scene(int count, int size) {
  SyntheticScene scene;
  scene.geometry = PlaneGeometry{3.0, 0.0};
  scene.rig = arc_rig(count, 20.0, 3.0, {0, 0, 3}, square_intrinsics(size, size));
  scene.splat_spacing = 0.02;
  scene.plane_extent = 2.0;
  return scene;
}

std::vector<ViewRecord> records_for(const SyntheticScene& scene, const std::filesystem::path& dir,
                                    bool precomputed) {
  std::vector<ViewRecord> recs;
  for (std::size_t i = 0; i < scene.rig.size(); ++i) {
    char id[32], img[32], dep[32];
    std::snprintf(id, sizeof id, "view_%02zu", i);
    std::snprintf(img, sizeof img, "image_%02zu.fwt", i);
    std::snprintf(dep, sizeof dep, "depth_%02zu.fwt", i);
    ViewRecord r;
    r.id = id;
    r.camera = scene.rig[i];
    r.image = dir / img;
    if (precomputed) {
      r.depth_source = DepthSource::Precomputed;
      r.depth_path = dir / dep;
    }
    recs.push_back(r);
  }
  return recs;
}

Outcome identity_warp() {
  Rng rng(11);
  const Camera cam = random_camera(rng, 64, 64);
  DepthMap depth = random_depth(rng, 64, 64);
  const FeatureMap feats = random_features(rng, 128, 64, 64);

  const auto t0 = Clock::now();
  const WarpField field = compute_warp_field(depth, cam, cam);
  const WarpedFeatures out = warp_feature_map(feats, field);
  const double secs = seconds_since(t0);

  double max_err = 0;
  int mask_errors = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const bool positive = depth.at(x, y) > 0;
      if (field.valid.at(x, y) != (positive ? 1.0f : 0.0f)) ++mask_errors;
      if (!positive) continue;
      for (int c = 0; c < 128; ++c)
        max_err = std::max(max_err, double(std::abs(out.features.at(c, y, x) - feats.at(c, y, x))));
    }
  return {max_err <= kIdentityTol && mask_errors == 0 && secs < kIdentitySeconds,
          fmt("max_abs=%.3g mask_errors=%d time=%.3fs", max_err, mask_errors, secs)};
}

Outcome analytic_disparity() {
  CameraIntrinsics k = square_intrinsics(96, 110);
  k.height = 72;
  k.cy = 36;
  double worst = 0;
  for (double z : {1.5, 2.5, 6.0})
    for (double tx : {-0.08, 0.03, 0.11}) {
      const Camera tgt{k, {}};
      const Camera src{k, CameraExtrinsics::from_rt(Matrix3d::Identity(), {tx, 0, 0})};
      const WarpField field = compute_warp_field(DepthMap(k.width, k.height, float(z)), tgt, src);
      // A ramp holding each source pixel's own u; bilinear reads back the
      // sampled coordinate, so the warped value minus x is the shift.
      FeatureMap ramp(1, k.height, k.width);
      for (int y = 0; y < k.height; ++y)
        for (int x = 0; x < k.width; ++x) ramp.at(0, y, x) = float(x + 0.5);
      const WarpedFeatures w = warp_feature_map(ramp, field);
      std::vector<double> err;
      for (int y = 0; y < k.height; ++y)
        for (int x = 0; x < k.width; ++x)
          if (w.mask.at(x, y) > 0)
            err.push_back(std::abs(w.features.at(0, y, x) - (x + 0.5) - k.fx * tx / z));
      if (err.empty()) return {false, "no valid pixels"};
      std::nth_element(err.begin(), err.begin() + err.size() / 2, err.end());
      worst = std::max(worst, err[err.size() / 2]);
    }
  return {worst <= kDisparityTol, fmt("worst_median_err=%.3g px over 9 planes", worst)};
}

Outcome round_trip() {
  const SyntheticScene scene = plane_scene(8, 128);
  double worst = 0;
  long checked = 0;
  for (int t = 1; t < 8; ++t) {
    const Camera& a = scene.rig[0];
    const Camera& b = scene.rig[t];
    const int w = a.intrinsics.width, h = a.intrinsics.height;
    // Low-frequency feature on the source grid.
    FeatureMap src(3, h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double u = (x + 0.5) / w, v = (y + 0.5) / h;
        src.at(0, y, x) = float(u);
        src.at(1, y, x) = float(v);
        src.at(2, y, x) = float(0.5 + 0.25 * std::sin(std::numbers::pi * u) * std::cos(std::numbers::pi * v));
      }
    const WarpField ab = compute_warp_field(scene.depth(b), b, a);
    const WarpedFeatures fwd = warp_feature_map(src, ab);
    const WarpField ba = compute_warp_field(scene.depth(a), a, b);
    const WarpedFeatures back = warp_feature_map(fwd.features, ba);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (back.mask.at(x, y) == 0) continue;
        // Only pixels whose whole footprint in b carried valid values.
        const std::size_t i = ba.index(x, y);
        const int x0 = int(std::floor(ba.u[i] - 0.5)), y0 = int(std::floor(ba.v[i] - 0.5));
        bool clean = true;
        for (int dy = 0; dy <= 1; ++dy)
          for (int dx = 0; dx <= 1; ++dx) {
            const int xx = std::clamp(x0 + dx, 0, w - 1), yy = std::clamp(y0 + dy, 0, h - 1);
            clean = clean && fwd.mask.at(xx, yy) > 0;
          }
        if (!clean) continue;
        ++checked;
        for (int c = 0; c < 3; ++c)
          worst = std::max(worst, double(std::abs(back.features.at(c, y, x) - src.at(c, y, x))));
      }
  }
  return {checked > 0 && worst <= kRoundTripTol,
          fmt("max_abs=%.3g over %ld pixels, 7 view pairs", worst, checked)};
}

Outcome mask_correctness() {
  Rng rng(2025);
  long mismatches = 0, pixels = 0, coord_errors = 0;
  for (int scene = 0; scene < 100; ++scene) {
    const int w = uniform_int(rng, 8, 64), h = uniform_int(rng, 8, 64);
    const Camera tgt = random_camera(rng, w, h, 0.4, 0.8);
    const Camera src = random_camera(rng, uniform_int(rng, 8, 64), uniform_int(rng, 8, 64), 0.4, 0.8);
    const DepthMap depth = random_depth(rng, w, h);
    const WarpField f = compute_warp_field(depth, tgt, src);
    const double sw = src.intrinsics.width, sh = src.intrinsics.height;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        ++pixels;
        const std::size_t i = f.index(x, y);
        double u = 0, v = 0;
        const bool front = depth.at(x, y) > 0 && reference_reproject(x, y, depth.at(x, y), tgt, src, u, v);
        bool expect = false;
        if (front) {
          if (std::abs(f.u[i] - u) > 1e-6 || std::abs(f.v[i] - v) > 1e-6) ++coord_errors;
          // Bound check on the field's own coordinates.
          expect = f.u[i] >= 0 && f.u[i] < sw && f.v[i] >= 0 && f.v[i] < sh;
        }
        if ((f.valid.data[i] == 1.0f) != expect || (f.valid.data[i] != 0.0f && f.valid.data[i] != 1.0f))
          ++mismatches;
      }
  }
  return {mismatches == 0 && coord_errors == 0,
          fmt("mismatches=%ld coord_errors=%ld over %ld pixels in 100 scenes", mismatches, coord_errors, pixels)};
}

Outcome normal_filter() {
  const FilterConfig cfg;
  bool ok = cfg.theta_max_deg == 60.0 && cfg.cos_threshold() == 0.5;

  // Direct pairs around dot = 0.5.
  const Vector3d n1(0, 0, -1);
  const Vector3d at(std::sqrt(3.0) / 2, 0, -0.5);
  ok = ok && keeps_normal_pair(n1, at, cfg);
  int flips = 0;
  for (double eps : {1e-12, 1e-9, 1e-6}) {
    const double c_in = 0.5 + eps, c_out = 0.5 - eps;
    const Vector3d in(std::sqrt(1 - c_in * c_in), 0, -c_in), out(std::sqrt(1 - c_out * c_out), 0, -c_out);
    if (keeps_normal_pair(n1, in, cfg) && !keeps_normal_pair(n1, out, cfg)) ++flips;
  }
  ok = ok && flips == 3;

  // Splats on the axis of a camera that turns about y by 60 degrees +- delta.
  const CameraIntrinsics k = square_intrinsics(32, 30);
  const Camera src{k, {}};
  Splat s;
  s.position = Vector3d(0, 0, 2);
  s.normal = Vector3d(0, 0, -1);
  s.scale = Vector2d(0.1, 0.1);
  int camera_flips = 0;
  for (double delta : {1e-9, 1e-6, 1e-3}) {
    auto turned = [&](double deg) {
      const Matrix3d r = Eigen::AngleAxisd(deg * std::numbers::pi / 180, Vector3d::UnitY()).toRotationMatrix();
      // Rotate about the splat so it stays on the optical axis.
      return Camera{k, CameraExtrinsics::from_rt(r, -r * s.position + s.position)};
    };
    const double dot_in = view_normal(s, src).dot(view_normal(s, turned(60 - delta)));
    const double dot_out = view_normal(s, src).dot(view_normal(s, turned(60 + delta)));
    const bool keep_in = filter_splat_indices({s}, src, turned(60 - delta), cfg).size() == 1;
    const bool keep_out = filter_splat_indices({s}, src, turned(60 + delta), cfg).size() == 1;
    if (dot_in > 0.5 && dot_out < 0.5 && keep_in && !keep_out) ++camera_flips;
  }
  ok = ok && camera_flips == 3;
  return {ok, fmt("cos_threshold=%.17g pair_flips=%d/3 camera_flips=%d/3", cfg.cos_threshold(), flips,
                  camera_flips)};
}

Outcome blend_schedule() {
  bool ok = true;
  double worst_step = 0;
  for (std::int64_t total : {1, 7, 50, 1000}) {
    const BlendSchedule s{0.9, total};
    ok = ok && alpha_at(s, 0) == 0.9 && alpha_at(s, total) == 0.0;
    for (std::int64_t t = 0; t < total; ++t)
      worst_step = std::max(worst_step, std::abs(alpha_at(s, t) - alpha_at(s, t + 1) - 0.9 / total));
  }
  ok = ok && BlendSchedule{}.alpha0 == 0.9 && worst_step <= 1e-15;

  Rng rng(7);
  bool endpoints = true;
  for (int trial = 0; trial < 20; ++trial) {
    const int c = uniform_int(rng, 1, 8), h = uniform_int(rng, 1, 32), w = uniform_int(rng, 1, 32);
    const FeatureMap warped = random_features(rng, c, h, w), fresh = random_features(rng, c, h, w);
    Mask soft(w, h), ones(w, h, 1.0f);
    for (float& m : soft.data) m = float(uniform(rng, 0, 1));
    endpoints = endpoints && blend_masked(warped, fresh, soft, 0.0).data == fresh.data;
    endpoints = endpoints && blend_masked(warped, fresh, ones, 1.0).data == warped.data;
  }
  return {ok && endpoints, fmt("alpha(0)=0.9 alpha(T)=0 worst_step_err=%.3g endpoints=%s", worst_step,
                               endpoints ? "exact" : "off")};
}

Vector3d random_unit(Rng& rng) {
  Vector3d v(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
  return v.norm() < 1e-3 ? Vector3d::UnitZ() : v.normalized();
}

RayIntersections random_rays(Rng& rng, int rays, int max_hits) {
  RayIntersections out;
  for (int r = 0; r < rays; ++r) {
    std::vector<Intersection> hits(uniform_int(rng, 0, max_hits));
    for (auto& h : hits) h = {uniform(rng, 0, 1), uniform(rng, 0.5, 10), random_unit(rng)};
    out.add_ray(hits);
  }
  return out;
}

double distortion_oracle(const RayIntersections& rays) {
  double total = 0;
  for (std::size_t r = 0; r < rays.ray_count(); ++r)
    for (const auto& a : rays.ray(r))
      for (const auto& b : rays.ray(r)) total += a.weight * b.weight * std::abs(a.depth - b.depth);
  return rays.ray_count() ? total / rays.ray_count() : 0.0;
}

double consistency_oracle(const RayIntersections& rays, const NormalMap& nm) {
  double total = 0;
  int contributing = 0;
  for (std::size_t r = 0; r < rays.ray_count(); ++r) {
    if (rays.ray(r).empty() || !nm.defined[r]) continue;
    ++contributing;
    for (const auto& hit : rays.ray(r)) total += hit.weight * (1 - hit.normal.dot(nm.normals[r]));
  }
  return contributing ? total / contributing : 0.0;
}

Outcome loss_kernels() {
  Rng rng(13);
  double ln_err = 0, ld_err = 0, grad_err = 0;
  bool zero_cases = true;
  for (int trial = 0; trial < 100; ++trial) {
    const int w = uniform_int(rng, 1, 8), h = uniform_int(rng, 1, 8);
    NormalMap nm(w, h);
    for (std::size_t i = 0; i < nm.normals.size(); ++i) {
      nm.normals[i] = random_unit(rng);
      nm.defined[i] = uniform(rng, 0, 1) < 0.8;
    }
    RayIntersections rays = random_rays(rng, w * h, 6);
    ln_err = std::max(ln_err, std::abs(normal_consistency_loss(rays, nm) - consistency_oracle(rays, nm)));
    const double ref = distortion_oracle(rays);
    ld_err = std::max(ld_err, std::abs(depth_distortion_loss(rays) - ref) / std::max(1.0, ref));

    // Aligned normals give zero, and only aligned ones do.
    RayIntersections aligned = rays;
    for (std::size_t r = 0; r < aligned.ray_count(); ++r)
      for (std::uint32_t k = aligned.offsets[r]; k < aligned.offsets[r + 1]; ++k)
        aligned.hits[k].normal = nm.normals[r];
    zero_cases = zero_cases && std::abs(normal_consistency_loss(aligned, nm)) <= kLossTol;
    if (consistency_oracle(rays, nm) > 1e-6) zero_cases = zero_cases && normal_consistency_loss(rays, nm) > 0;

    // One hit per ray gives zero distortion.
    RayIntersections single;
    for (std::size_t r = 0; r < rays.ray_count(); ++r)
      single.add_ray(rays.ray(r).subspan(0, std::min<std::size_t>(1, rays.ray(r).size())));
    zero_cases = zero_cases && depth_distortion_loss(single) == 0.0;

    const std::vector<double> grad = depth_distortion_grad(rays);
    const double step = 1e-6;
    for (std::size_t k = 0; k < rays.hits.size(); ++k) {
      RayIntersections plus = rays, minus = rays;
      plus.hits[k].depth += step;
      minus.hits[k].depth -= step;
      const double fd = (distortion_oracle(plus) - distortion_oracle(minus)) / (2 * step);
      grad_err = std::max(grad_err, std::abs(fd - grad[k]));
    }
  }
  return {zero_cases && ln_err <= kLossTol && ld_err <= kLossTol && grad_err <= kGradTol,
          fmt("normal_err=%.3g distortion_err=%.3g grad_err=%.3g zero_cases=%s", ln_err, ld_err, grad_err,
              zero_cases ? "ok" : "off")};
}

Outcome pipeline_determinism() {
  // Partition by selection alone.
  std::vector<ViewRecord> bare(120);
  for (int i = 0; i < 120; ++i) bare[i].id = "v" + std::to_string(i);
  const StageConfig cfg{3, 40, 20240};
  std::set<std::string> seen;
  bool sizes = true;
  for (int s = 0; s < 3; ++s) {
    const auto subset = select_subset(bare, cfg, s);
    sizes = sizes && subset.size() == 40;
    for (const auto& id : subset) {
      seen.insert(id);
      for (auto& r : bare)
        if (r.id == id) r.edited = true;
    }
  }
  const bool partition = sizes && seen.size() == 120;

  // Full pipeline over a source plus 120 targets, twice.
  SyntheticScene scene = plane_scene(121, 16);
  const auto dir = scratch_dir("acceptance_determinism");
  synth_scene(scene, dir);
  GeometryConfig geometry;
  auto run = [&]() {
    auto recs = records_for(scene, dir, true);
    IdentityEditor editor;
    PipelineOptions opts;
    opts.record_timing = false;
    const RunManifest m = run_pipeline(recs, "view_60", editor, cfg, geometry, opts);
    std::set<std::string> targets;
    bool full = true;
    for (const auto& st : m.stages) {
      full = full && st.selected.size() == 40;
      targets.insert(st.selected.begin(), st.selected.end());
    }
    const bool covers = full && targets.size() == 120 && !targets.count("view_60");
    return std::make_pair(m.to_json().dump(), covers);
  };
  const auto first = run();
  const auto second = run();
  const bool same = first.first == second.first;
  return {partition && same && first.second,
          fmt("select_partition=%s pipeline_partition=%s manifests_identical=%s", partition ? "yes" : "no",
              first.second ? "yes" : "no", same ? "yes" : "no")};
}

Outcome stamp_propagation() {
  const auto t0 = Clock::now();
  const SyntheticScene scene = plane_scene(8, 128);
  const auto dir = scratch_dir("acceptance_stamp");
  synth_scene(scene, dir);
  auto recs = records_for(scene, dir, false);
  GeometryConfig geometry;
  geometry.splats = splats_from_tensor(load_tensor(dir / "splats.fwt"));
  const Vector2d center(64, 64);
  const double radius = 36;
  StampEditor editor(center, radius);
  PipelineOptions opts;
  const RunManifest m = run_pipeline(recs, "view_00", editor, StageConfig{3, 3, 7}, geometry, opts);
  const double secs = seconds_since(t0);

  double worst = 1.0;
  int scored = 0, failed = 0;
  for (const auto& st : m.stages)
    for (const auto& o : st.outputs) {
      if (o.error) {
        ++failed;
        continue;
      }
      const int idx = std::stoi(o.view_id.substr(5));
      worst = std::min(worst, stamp_propagation_iou(scene, scene.rig[0], scene.rig[idx], o.warped, center, radius));
      ++scored;
    }
  return {failed == 0 && scored == 7 && worst >= kStampIou && secs < kStampSeconds,
          fmt("min_iou=%.4f views=%d failed=%d time=%.2fs", worst, scored, failed, secs)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"identity-pose warp", identity_warp},
      {"analytic disparity", analytic_disparity},
      {"round-trip consistency", round_trip},
      {"mask correctness", mask_correctness},
      {"normal filter threshold", normal_filter},
      {"blend schedule", blend_schedule},
      {"loss kernels", loss_kernels},
      {"pipeline determinism", pipeline_determinism},
      {"edit propagation", stamp_propagation},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s  %-24s %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
  }
  std::printf("%d/%zu criteria passed\n", int(criteria.size()) - failures, criteria.size());
  return failures;
}
