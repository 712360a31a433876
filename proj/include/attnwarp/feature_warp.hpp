#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "attnwarp/geometry.hpp"
#include "attnwarp/grid.hpp"
#include "attnwarp/tensor_io.hpp"

namespace attnwarp {

enum class Sampling { Nearest, Bilinear };

Sampling sampling_from_string(const std::string& s);

struct AttentionLayer {
  std::string id;
  FeatureMap self_attn;
  std::optional<FeatureMap> cross_attn;
};

/// (height, width) of a feature grid.
using Resolution = std::pair<int, int>;

inline const std::vector<int> kDefaultResolutions = {32, 64};

struct AttentionBundle {
  std::vector<AttentionLayer> layers;

  /// Unique ids, finite maps, every side length in `allowed`. Empty
  /// `allowed` accepts any size.
  void validate(const std::vector<int>& allowed = kDefaultResolutions) const;
  std::vector<Resolution> resolutions() const;
  const AttentionLayer* find(const std::string& id) const;
};

/// Resamples a full-resolution field onto a new_w x new_h target grid (nearest
/// neighbour, never interpolated) and rescales coordinates to a source grid of
/// new_src_w x new_src_h (defaults to the target size). Throws Config on a
/// zero size.
WarpField resample_warp_field(const WarpField& field, int new_h, int new_w, int new_src_h = 0,
                              int new_src_w = 0);

struct WarpedFeatures {
  FeatureMap features;
  Mask mask;
};

/// Samples `src` at the field's coordinates. Values are written wherever the
/// field is valid (edge-clamped footprint) and zero elsewhere. The returned
/// mask is the field validity restricted to pixels whose sampling footprint
/// lies inside the source grid.
WarpedFeatures warp_feature_map(const FeatureMap& src, const WarpField& field,
                                Sampling sampling = Sampling::Bilinear);

struct WarpedBundle {
  AttentionBundle bundle;
  /// Visibility mask per distinct layer resolution: the field validity
  /// resampled to that grid.
  std::map<Resolution, Mask> masks;
};

WarpedBundle warp_bundle(const AttentionBundle& bundle, const WarpField& field,
                         Sampling sampling = Sampling::Bilinear);

/// A bundle as its manifest plus the tensors it references, in the order the
/// manifest names them (self, then cross, layer by layer). The manifest is the
/// one written to disk.
struct BundleParts {
  nlohmann::ordered_json manifest;
  std::vector<Tensor> tensors;
};

BundleParts bundle_to_parts(const AttentionBundle& bundle);
/// Throws Config on a malformed manifest or a tensor count that does not match.
AttentionBundle bundle_from_parts(const nlohmann::json& manifest, const std::vector<Tensor>& tensors);

// On disk a bundle is a directory: manifest.json plus one .fwt per map.
void save_bundle(const std::filesystem::path& dir, const AttentionBundle& bundle);
AttentionBundle load_bundle(const std::filesystem::path& dir);

}  // namespace attnwarp
