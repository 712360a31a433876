#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "attnwarp/grid.hpp"

namespace attnwarp {

/// In-memory form of a .fwt file.
///
/// Byte layout (all integers little-endian):
///   "FWT1" | ndim:u8 | dims: ndim x u32 | dtype:u8 (0 = float32) | payload
/// The payload holds prod(dims) float32 values in row-major order.
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  Tensor() = default;
  Tensor(std::vector<std::uint32_t> d, std::vector<float> values);

  std::size_t element_count() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

inline constexpr char kTensorMagic[4] = {'F', 'W', 'T', '1'};
inline constexpr std::uint8_t kDtypeFloat32 = 0;

/// Throws BadMagic, Truncated, UnsupportedDtype or Size.
Tensor read_tensor(std::istream& in);
void write_tensor(std::ostream& out, const Tensor& t);

Tensor decode_tensor(const std::string& bytes);
std::string encode_tensor(const Tensor& t);

Tensor load_tensor(const std::filesystem::path& path);
void save_tensor(const std::filesystem::path& path, const Tensor& t);

// Typed views. Depth maps and masks are [H, W]; feature maps are [C, H, W]
// (a [H, W] tensor reads as a single channel).
Tensor to_tensor(const DepthMap& d);
Tensor to_tensor(const Mask& m);
Tensor to_tensor(const FeatureMap& f);
DepthMap depth_from_tensor(const Tensor& t);
Mask mask_from_tensor(const Tensor& t);
FeatureMap feature_from_tensor(const Tensor& t);

}  // namespace attnwarp
