#pragma once

#include <array>
#include <span>
#include <vector>

#include "a3s/autodiff/tape.hpp"
#include "a3s/autodiff/tensor.hpp"

namespace a3s {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

using CubicCurve = std::array<Point, 4>;
using Polygon = std::vector<Point>;

/// Text region bounded by two cubic Bezier curves. Both run left to right
/// along the reading direction; bottom lies beneath top.
struct BezierRegion {
  CubicCurve top{};
  CubicCurve bottom{};

  /// 16 scalars: top b0..b3 then bottom b0..b3, x before y.
  std::array<double, 16> flatten() const;
  static BezierRegion from_flat(std::span<const double> values);
  bool finite() const;
  BezierRegion translated(double dx, double dy) const;
  BezierRegion scaled(double factor) const;
  friend bool operator==(const BezierRegion&, const BezierRegion&) = default;
};

/// Cubic Bernstein evaluation. Throws InputError when t is outside [0,1].
Point bezier_point(const CubicCurve& curve, double t);

struct SampleGrid {
  int out_h = 0;
  int out_w = 0;
  std::vector<Point> points;  // row-major, out_h * out_w

  const Point& at(int row, int col) const { return points[static_cast<std::size_t>(row * out_w + col)]; }
};

/// Column j samples both curves at t = j/(out_w-1) (t = 0 when out_w == 1);
/// row i sits at s = (i + 0.5)/out_h between top (s=0) and bottom (s=1).
SampleGrid region_grid(const BezierRegion& region, int out_h, int out_w);

/// Warps the region of feature_map [c,h,w] onto a [c,out_h,out_w] grid.
/// Region coordinates are in image pixels; spatial_scale maps them onto the
/// feature map. Differentiable with respect to feature_map.
Tensor bezier_align(Tape& tape, const Tensor& feature_map, const BezierRegion& region, int out_h,
                    int out_w, double spatial_scale);

/// Top curve left to right, then bottom curve right to left.
Polygon region_to_polygon(const BezierRegion& region, int samples_per_curve = 8);

}  // namespace a3s
