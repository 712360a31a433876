#include "png_export.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include <png.h>

#include "attnwarp/error.hpp"

namespace fwarp {

using attnwarp::ErrorKind;
using attnwarp::require;

void write_png(const std::filesystem::path& path, const attnwarp::FeatureMap& map, bool normalize) {
  require(map.channels == 1 || map.channels == 3, ErrorKind::DimensionMismatch,
          "PNG export needs a 1- or 3-channel map");
  float scale = 1.0f;
  if (normalize) {
    const float peak = *std::max_element(map.data.begin(), map.data.end());
    scale = peak > 0.0f ? 1.0f / peak : 1.0f;
  }
  const int w = map.width, h = map.height, c = map.channels;
  std::vector<unsigned char> pixels(static_cast<std::size_t>(w) * h * c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        const float v = std::clamp(map.at(ch, y, x) * scale, 0.0f, 1.0f);
        pixels[(static_cast<std::size_t>(y) * w + x) * c + ch] = static_cast<unsigned char>(std::lround(v * 255.0f));
      }

  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "wb"), &std::fclose);
  require(file != nullptr, ErrorKind::Io, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    attnwarp::fail(ErrorKind::Io, "libpng failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < h; ++y) png_write_row(png, pixels.data() + static_cast<std::size_t>(y) * w * c);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace fwarp
