#include "attnwarp/grid.hpp"

#include <cmath>
#include <string>

#include "attnwarp/error.hpp"

namespace attnwarp {

namespace {

std::size_t checked_area(int w, int h) {
  require(w >= 0 && h >= 0, ErrorKind::Size, "negative grid size");
  return static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
}

}  // namespace

DepthMap::DepthMap(int w, int h, float fill) : width(w), height(h), data(checked_area(w, h), fill) {}

void DepthMap::validate() const {
  require(data.size() == checked_area(width, height), ErrorKind::DimensionMismatch,
          "depth map payload does not match its size");
  for (float d : data) {
    require(std::isfinite(d), ErrorKind::NonFinite, "depth map has a non-finite entry");
    require(d >= 0.0f, ErrorKind::OutOfRange, "depth map has a negative entry");
  }
}

Mask::Mask(int w, int h, float fill) : width(w), height(h), data(checked_area(w, h), fill) {}

double Mask::coverage() const {
  if (data.empty()) return 0.0;
  double sum = 0.0;
  for (float m : data) sum += m;
  return sum / static_cast<double>(data.size());
}

bool Mask::is_binary() const {
  for (float m : data)
    if (m != 0.0f && m != 1.0f) return false;
  return true;
}

void Mask::validate() const {
  require(data.size() == checked_area(width, height), ErrorKind::DimensionMismatch,
          "mask payload does not match its size");
  for (float m : data) {
    require(std::isfinite(m), ErrorKind::NonFinite, "mask has a non-finite entry");
    require(m >= 0.0f && m <= 1.0f, ErrorKind::OutOfRange, "mask entry outside [0,1]");
  }
}

FeatureMap::FeatureMap(int c, int h, int w, float fill)
    : channels(c), height(h), width(w), data(checked_area(w, h) * checked_area(c, 1), fill) {}

void FeatureMap::require_finite(const char* what) const {
  for (float x : data)
    if (!std::isfinite(x)) fail(ErrorKind::NonFinite, std::string(what) + " has a non-finite value");
}

}  // namespace attnwarp
