#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace finegrain {

// Interleaved 8-bit RGB image.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 0) : width(w), height(h), rgb(std::size_t(w) * h * 3, fill) {}

  std::uint8_t* pixel(int x, int y) { return rgb.data() + (std::size_t(y) * width + x) * 3; }
  const std::uint8_t* pixel(int x, int y) const { return rgb.data() + (std::size_t(y) * width + x) * 3; }
  bool operator==(const Image& other) const = default;
};

void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

// Bilinear resampling with half-pixel centres; returns planar float channels
// [3][h][w] holding values in the source range [0, 255].
std::vector<double> resize_bilinear_planar(const Image& image, int out_width, int out_height);

}  // namespace finegrain
