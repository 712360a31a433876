#pragma once

#include <cstddef>
#include <vector>

namespace attnwarp {

/// H x W grid of metric depth along the camera +z axis. Zero marks
/// "no geometry" and is never warped.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  DepthMap() = default;
  DepthMap(int w, int h, float fill = 0.0f);

  float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return data.size(); }

  /// Throws NonFinite / OutOfRange on entries that are not finite or negative.
  void validate() const;
};

/// H x W weights in [0,1]. The visibility mask is binary; soft masks are
/// accepted by the blend.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  Mask() = default;
  Mask(int w, int h, float fill = 0.0f);

  float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return data.size(); }

  /// Fraction of the mass of the mask relative to its area.
  double coverage() const;
  bool is_binary() const;
  void validate() const;

  friend bool operator==(const Mask&, const Mask&) = default;
};

/// C x H x W row-major feature tensor (attention maps, RGB images).
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  FeatureMap() = default;
  FeatureMap(int c, int h, int w, float fill = 0.0f);

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  std::size_t index(int c, int y, int x) const {
    return static_cast<std::size_t>(c) * plane() + static_cast<std::size_t>(y) * width + x;
  }
  float& at(int c, int y, int x) { return data[index(c, y, x)]; }
  float at(int c, int y, int x) const { return data[index(c, y, x)]; }

  bool same_shape(const FeatureMap& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
  void require_finite(const char* what) const;

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

}  // namespace attnwarp
