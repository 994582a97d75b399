#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fis {

// 8-bit RGB image, row-major, 3 bytes per pixel.
struct Rgb8Image {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;

  bool operator==(const Rgb8Image& other) const = default;
};

Rgb8Image read_png_rgb8(const std::string& path);
void write_png_rgb8(const std::string& path, const Rgb8Image& image);

}  // namespace fis
