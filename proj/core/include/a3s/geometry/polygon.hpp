#pragma once

#include "a3s/geometry/bezier.hpp"

namespace a3s {

inline constexpr int kDefaultRasterScale = 8;

/// Signed shoelace area (positive for counter-clockwise in y-up axes).
double polygon_signed_area(const Polygon& poly);
double polygon_area(const Polygon& poly);

struct Box {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};
Box polygon_bounds(const Polygon& poly);

/// Even-odd rule.
bool point_in_polygon(const Polygon& poly, Point p);

/// No two non-adjacent edges intersect.
bool is_simple_polygon(const Polygon& poly);

/// Rasterized IoU: both polygons are point-sampled (even-odd) at raster_scale
/// samples per pixel over their joint bounding box. Returns 0 for an empty
/// union. Throws InputError when raster_scale < 1.
double polygon_iou(const Polygon& a, const Polygon& b, int raster_scale = kDefaultRasterScale);

}  // namespace a3s
