#include "a3s_cli/viz.hpp"

#include <cmath>
#include <cstdlib>

#include "a3s/data/charset.hpp"

namespace a3s::viz {
namespace {

constexpr Glyph kColon = {0b00000, 0b01100, 0b01100, 0b00000, 0b01100, 0b01100, 0b00000};
constexpr Glyph kDot = {0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b01100, 0b01100};
constexpr Glyph kBox = {0b11111, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b11111};

const Glyph& lookup(char c) {
  if (char_index(c) >= 0) return glyph_for(c);
  if (c == ':') return kColon;
  if (c == '.') return kDot;
  return kBox;
}

}  // namespace

void draw_line(RgbImage& img, Point a, Point b, Color c) {
  long x0 = std::lround(a.x), y0 = std::lround(a.y);
  const long x1 = std::lround(b.x), y1 = std::lround(b.y);
  const long dx = std::labs(x1 - x0), dy = -std::labs(y1 - y0);
  const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  long err = dx + dy;
  for (int guard = 0; guard < 100000; ++guard) {
    img.set(static_cast<int>(x0), static_cast<int>(y0), c.r, c.g, c.b);
    if (x0 == x1 && y0 == y1) break;
    const long e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void draw_polygon(RgbImage& img, const Polygon& poly, Color c) {
  for (std::size_t i = 0; i < poly.size(); ++i) draw_line(img, poly[i], poly[(i + 1) % poly.size()], c);
}

void draw_text(RgbImage& img, int x, int y, std::string_view text, Color c) {
  for (char ch : text) {
    const Glyph& g = lookup(ch);
    for (int row = 0; row < kGlyphHeight; ++row)
      for (int col = 0; col < kGlyphWidth; ++col)
        if (glyph_bit(g, col, row)) img.set(x + col, y + row, c.r, c.g, c.b);
    x += kGlyphWidth + 1;
  }
}

}  // namespace a3s::viz
