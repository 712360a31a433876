#include "attnwarp/feature_warp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "attnwarp/error.hpp"
#include "attnwarp/tensor_io.hpp"

namespace attnwarp {

namespace {

// Slack on the bilinear footprint test so coordinates that are integral up
// to rounding (identity warps) still count as fully inside.
constexpr double kFootprintSlack = 1e-6;

bool valid_layer_id(const std::string& id) {
  if (id.empty() || id.front() == '.') return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
  });
}

void check_side(int side, const std::vector<int>& allowed, const std::string& id) {
  if (allowed.empty()) return;
  require(std::find(allowed.begin(), allowed.end(), side) != allowed.end(), ErrorKind::Config,
          "layer '" + id + "' has resolution " + std::to_string(side) + " outside the allow-list");
}

}  // namespace

Sampling sampling_from_string(const std::string& s) {
  if (s == "bilinear") return Sampling::Bilinear;
  if (s == "nearest") return Sampling::Nearest;
  fail(ErrorKind::Config, "unknown sampling mode '" + s + "'");
}

void AttentionBundle::validate(const std::vector<int>& allowed) const {
  std::set<std::string> seen;
  for (const auto& layer : layers) {
    require(valid_layer_id(layer.id), ErrorKind::Config, "invalid layer id '" + layer.id + "'");
    require(seen.insert(layer.id).second, ErrorKind::Config, "duplicate layer id '" + layer.id + "'");
    require(layer.self_attn.channels > 0 && layer.self_attn.height > 0 && layer.self_attn.width > 0,
            ErrorKind::Size, "layer '" + layer.id + "' has an empty self-attention map");
    layer.self_attn.require_finite("self-attention map");
    check_side(layer.self_attn.height, allowed, layer.id);
    check_side(layer.self_attn.width, allowed, layer.id);
    if (layer.cross_attn) {
      require(layer.cross_attn->channels > 0 && layer.cross_attn->height > 0 &&
                  layer.cross_attn->width > 0,
              ErrorKind::Size, "layer '" + layer.id + "' has an empty cross-attention map");
      layer.cross_attn->require_finite("cross-attention map");
      check_side(layer.cross_attn->height, allowed, layer.id);
      check_side(layer.cross_attn->width, allowed, layer.id);
    }
  }
}

std::vector<Resolution> AttentionBundle::resolutions() const {
  std::set<Resolution> res;
  for (const auto& layer : layers) {
    res.insert({layer.self_attn.height, layer.self_attn.width});
    if (layer.cross_attn) res.insert({layer.cross_attn->height, layer.cross_attn->width});
  }
  return {res.begin(), res.end()};
}

const AttentionLayer* AttentionBundle::find(const std::string& id) const {
  for (const auto& layer : layers)
    if (layer.id == id) return &layer;
  return nullptr;
}

WarpField resample_warp_field(const WarpField& field, int new_h, int new_w, int new_src_h,
                              int new_src_w) {
  require(new_h >= 1 && new_w >= 1, ErrorKind::Config, "resample target size must be at least 1x1");
  require(field.width >= 1 && field.height >= 1, ErrorKind::Config, "cannot resample an empty field");
  if (new_src_w <= 0)
    new_src_w = field.src_width == field.width
                    ? new_w
                    : std::max(1, static_cast<int>(std::lround(double(field.src_width) * new_w / field.width)));
  if (new_src_h <= 0)
    new_src_h = field.src_height == field.height
                    ? new_h
                    : std::max(1, static_cast<int>(std::lround(double(field.src_height) * new_h / field.height)));

  if (new_w == field.width && new_h == field.height && new_src_w == field.src_width &&
      new_src_h == field.src_height)
    return field;

  const double sx = static_cast<double>(new_src_w) / field.src_width;
  const double sy = static_cast<double>(new_src_h) / field.src_height;

  // Grid: new pixel x takes the old pixel floor(x * W / new_w). Coordinates
  // are scaled about pixel centers, (u - 1/2) * s + 1/2, which is exact for
  // identity and translation fields.
  WarpField out(new_w, new_h, new_src_w, new_src_h);
  for (int y = 0; y < new_h; ++y) {
    const int ky = static_cast<int>(static_cast<long long>(y) * field.height / new_h);
    for (int x = 0; x < new_w; ++x) {
      const int kx = static_cast<int>(static_cast<long long>(x) * field.width / new_w);
      const std::size_t k = field.index(kx, ky);
      const std::size_t i = out.index(x, y);
      out.u[i] = sx == 1.0 ? field.u[k] : (field.u[k] - 0.5) * sx + 0.5;
      out.v[i] = sy == 1.0 ? field.v[k] : (field.v[k] - 0.5) * sy + 0.5;
      out.valid.data[i] = field.valid.data[k];
    }
  }
  return out;
}

WarpedFeatures warp_feature_map(const FeatureMap& src, const WarpField& field, Sampling sampling) {
  require(src.width == field.src_width && src.height == field.src_height, ErrorKind::DimensionMismatch,
          "feature map size does not match the warp field's source grid");
  require(field.u.size() == static_cast<std::size_t>(field.width) * field.height &&
              field.v.size() == field.u.size() && field.valid.data.size() == field.u.size(),
          ErrorKind::DimensionMismatch, "warp field arrays do not match its size");
  require(src.channels >= 1, ErrorKind::Size, "feature map needs at least one channel");
  src.require_finite("source feature map");

  WarpedFeatures out{FeatureMap(src.channels, field.height, field.width, 0.0f),
                     Mask(field.width, field.height, 0.0f)};
  const int sw = src.width;
  const int sh = src.height;

#pragma omp parallel for schedule(static)
  for (int y = 0; y < field.height; ++y) {
    for (int x = 0; x < field.width; ++x) {
      const std::size_t i = field.index(x, y);
      if (field.valid.data[i] == 0.0f) continue;
      const double u = field.u[i];
      const double v = field.v[i];

      if (sampling == Sampling::Nearest) {
        const bool inside = u >= 0.0 && u < sw && v >= 0.0 && v < sh;
        const int ix = std::clamp(static_cast<int>(std::floor(u)), 0, sw - 1);
        const int iy = std::clamp(static_cast<int>(std::floor(v)), 0, sh - 1);
        for (int c = 0; c < src.channels; ++c) out.features.at(c, y, x) = src.at(c, iy, ix);
        out.mask.at(x, y) = inside ? 1.0f : 0.0f;
        continue;
      }

      // Pixel centers sit at integer + 1/2; move to index space first.
      const double fx = u - 0.5;
      const double fy = v - 0.5;
      const bool inside = fx >= -kFootprintSlack && fx <= (sw - 1) + kFootprintSlack &&
                          fy >= -kFootprintSlack && fy <= (sh - 1) + kFootprintSlack;
      const double cx = std::clamp(fx, 0.0, static_cast<double>(sw - 1));
      const double cy = std::clamp(fy, 0.0, static_cast<double>(sh - 1));
      const int x0 = static_cast<int>(std::floor(cx));
      const int y0 = static_cast<int>(std::floor(cy));
      const int x1 = std::min(x0 + 1, sw - 1);
      const int y1 = std::min(y0 + 1, sh - 1);
      const double wx = cx - x0;
      const double wy = cy - y0;
      for (int c = 0; c < src.channels; ++c) {
        const double top = (1.0 - wx) * src.at(c, y0, x0) + wx * src.at(c, y0, x1);
        const double bottom = (1.0 - wx) * src.at(c, y1, x0) + wx * src.at(c, y1, x1);
        out.features.at(c, y, x) = static_cast<float>((1.0 - wy) * top + wy * bottom);
      }
      out.mask.at(x, y) = inside ? 1.0f : 0.0f;
    }
  }
  return out;
}

WarpedBundle warp_bundle(const AttentionBundle& bundle, const WarpField& field, Sampling sampling) {
  bundle.validate({});
  std::map<Resolution, WarpField> fields;
  WarpedBundle out;
  for (const Resolution& res : bundle.resolutions()) {
    auto& f = fields.emplace(res, resample_warp_field(field, res.first, res.second, res.first, res.second))
                  .first->second;
    out.masks.emplace(res, f.valid);
  }
  for (const auto& layer : bundle.layers) {
    AttentionLayer warped;
    warped.id = layer.id;
    warped.self_attn =
        warp_feature_map(layer.self_attn, fields.at({layer.self_attn.height, layer.self_attn.width}),
                         sampling)
            .features;
    if (layer.cross_attn) {
      const FeatureMap& cross = *layer.cross_attn;
      warped.cross_attn = warp_feature_map(cross, fields.at({cross.height, cross.width}), sampling).features;
    }
    out.bundle.layers.push_back(std::move(warped));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bundle directories

BundleParts bundle_to_parts(const AttentionBundle& bundle) {
  bundle.validate({});
  BundleParts parts;
  parts.manifest["format"] = "fwt-bundle/1";
  parts.manifest["layers"] = nlohmann::ordered_json::array();
  for (const auto& layer : bundle.layers) {
    nlohmann::ordered_json entry;
    entry["id"] = layer.id;
    entry["resolution"] = {layer.self_attn.height, layer.self_attn.width};
    entry["self"] = layer.id + ".self.fwt";
    parts.tensors.push_back(to_tensor(layer.self_attn));
    if (layer.cross_attn) {
      entry["cross"] = layer.id + ".cross.fwt";
      parts.tensors.push_back(to_tensor(*layer.cross_attn));
    } else {
      entry["cross"] = nullptr;
    }
    parts.manifest["layers"].push_back(entry);
  }
  return parts;
}

AttentionBundle bundle_from_parts(const nlohmann::json& manifest, const std::vector<Tensor>& tensors) {
  AttentionBundle bundle;
  std::size_t next = 0;
  auto take = [&](const std::string& what) -> const Tensor& {
    require(next < tensors.size(), ErrorKind::Config, "bundle manifest names more tensors than given at " + what);
    return tensors[next++];
  };
  try {
    require(manifest.value("format", "") == "fwt-bundle/1", ErrorKind::Config, "unsupported bundle format");
    for (const auto& entry : manifest.at("layers")) {
      AttentionLayer layer;
      layer.id = entry.at("id").get<std::string>();
      require(valid_layer_id(layer.id), ErrorKind::Config, "invalid layer id '" + layer.id + "'");
      require(entry.at("self").is_string(), ErrorKind::Config, "layer '" + layer.id + "' has no self map");
      layer.self_attn = feature_from_tensor(take(layer.id + ".self"));
      const auto res = entry.at("resolution").get<std::vector<int>>();
      require(res.size() == 2 && res[0] == layer.self_attn.height && res[1] == layer.self_attn.width,
              ErrorKind::DimensionMismatch, "bundle manifest resolution disagrees with layer '" + layer.id + "'");
      if (entry.contains("cross") && !entry.at("cross").is_null()) {
        require(entry.at("cross").is_string(), ErrorKind::Config, "layer '" + layer.id + "' has a bad cross entry");
        layer.cross_attn = feature_from_tensor(take(layer.id + ".cross"));
      }
      bundle.layers.push_back(std::move(layer));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("bundle manifest: ") + e.what());
  }
  require(next == tensors.size(), ErrorKind::Config, "bundle has tensors the manifest does not name");
  bundle.validate({});
  return bundle;
}

void save_bundle(const std::filesystem::path& dir, const AttentionBundle& bundle) {
  const BundleParts parts = bundle_to_parts(bundle);
  std::filesystem::create_directories(dir);
  std::size_t k = 0;
  for (const auto& entry : parts.manifest["layers"]) {
    save_tensor(dir / entry["self"].get<std::string>(), parts.tensors[k++]);
    if (!entry["cross"].is_null()) save_tensor(dir / entry["cross"].get<std::string>(), parts.tensors[k++]);
  }
  std::ofstream out(dir / "manifest.json");
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write bundle manifest in " + dir.string());
  out << parts.manifest.dump(2) << "\n";
}

AttentionBundle load_bundle(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  require(static_cast<bool>(in), ErrorKind::Io, "missing bundle manifest in " + dir.string());
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json manifest;
  std::vector<Tensor> tensors;
  try {
    manifest = nlohmann::json::parse(ss.str());
    for (const auto& entry : manifest.at("layers")) {
      tensors.push_back(load_tensor(dir / entry.at("self").get<std::string>()));
      if (entry.contains("cross") && !entry.at("cross").is_null())
        tensors.push_back(load_tensor(dir / entry.at("cross").get<std::string>()));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("bundle manifest in ") + dir.string() + ": " + e.what());
  }
  return bundle_from_parts(manifest, tensors);
}

}  // namespace attnwarp
