#pragma once

#include <string_view>

#include "a3s/data/image.hpp"
#include "a3s/geometry/bezier.hpp"

namespace a3s::viz {

struct Color {
  std::uint8_t r, g, b;
};

inline constexpr Color kBlue{40, 90, 255};

void draw_line(RgbImage& img, Point a, Point b, Color c);
void draw_polygon(RgbImage& img, const Polygon& poly, Color c);
/// 5x7 font, one pixel gap between glyphs. Covers a-z, 0-9, ':' and '.';
/// other characters draw as a box.
void draw_text(RgbImage& img, int x, int y, std::string_view text, Color c);

}  // namespace a3s::viz
