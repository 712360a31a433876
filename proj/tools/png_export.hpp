#pragma once

#include <filesystem>

#include "attnwarp/grid.hpp"

namespace fwarp {

/// 8-bit PNG of a 1- or 3-channel map. Values are clamped to [0,1] unless
/// `normalize` is set, in which case they are divided by the maximum.
void write_png(const std::filesystem::path& path, const attnwarp::FeatureMap& map, bool normalize);

}  // namespace fwarp
