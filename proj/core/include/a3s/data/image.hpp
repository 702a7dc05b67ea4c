#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace a3s {

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y * width + x)]; }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y * width + x)]; }
};

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, 3 bytes per pixel

  static RgbImage from_gray(const GrayImage& g);
  void set(int x, int y, std::uint8_t r, std::uint8_t gr, std::uint8_t b);
};

/// 8-bit grayscale PNG. Throws IoError naming the file.
GrayImage read_png_gray(const std::filesystem::path& path);
void write_png_gray(const std::filesystem::path& path, const GrayImage& image);
void write_png_rgb(const std::filesystem::path& path, const RgbImage& image);

}  // namespace a3s
