#include "a3s/geometry/bezier.hpp"

#include <cmath>

#include "a3s/autodiff/ops.hpp"
#include "a3s/errors.hpp"

namespace a3s {

std::array<double, 16> BezierRegion::flatten() const {
  std::array<double, 16> out{};
  for (int i = 0; i < 4; ++i) {
    out[2 * i] = top[i].x;
    out[2 * i + 1] = top[i].y;
    out[8 + 2 * i] = bottom[i].x;
    out[8 + 2 * i + 1] = bottom[i].y;
  }
  return out;
}

BezierRegion BezierRegion::from_flat(std::span<const double> values) {
  if (values.size() != 16)
    throw InputError("a Bezier region needs 16 values, got " + std::to_string(values.size()));
  BezierRegion r;
  for (int i = 0; i < 4; ++i) {
    r.top[i] = {values[2 * i], values[2 * i + 1]};
    r.bottom[i] = {values[8 + 2 * i], values[8 + 2 * i + 1]};
  }
  return r;
}

bool BezierRegion::finite() const {
  for (double v : flatten())
    if (!std::isfinite(v)) return false;
  return true;
}

BezierRegion BezierRegion::translated(double dx, double dy) const {
  BezierRegion r = *this;
  for (auto* curve : {&r.top, &r.bottom})
    for (auto& p : *curve) {
      p.x += dx;
      p.y += dy;
    }
  return r;
}

BezierRegion BezierRegion::scaled(double factor) const {
  BezierRegion r = *this;
  for (auto* curve : {&r.top, &r.bottom})
    for (auto& p : *curve) {
      p.x *= factor;
      p.y *= factor;
    }
  return r;
}

Point bezier_point(const CubicCurve& c, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw InputError("bezier_point: t must lie in [0,1]");
  const double u = 1.0 - t;
  const double b0 = u * u * u, b1 = 3 * u * u * t, b2 = 3 * u * t * t, b3 = t * t * t;
  return {b0 * c[0].x + b1 * c[1].x + b2 * c[2].x + b3 * c[3].x,
          b0 * c[0].y + b1 * c[1].y + b2 * c[2].y + b3 * c[3].y};
}

SampleGrid region_grid(const BezierRegion& region, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw InputError("region_grid: output size must be positive");
  SampleGrid grid{out_h, out_w, {}};
  grid.points.resize(static_cast<std::size_t>(out_h) * out_w);
  for (int j = 0; j < out_w; ++j) {
    const double t = out_w == 1 ? 0.0 : static_cast<double>(j) / (out_w - 1);
    const Point top = bezier_point(region.top, t);
    const Point bot = bezier_point(region.bottom, t);
    for (int i = 0; i < out_h; ++i) {
      const double s = (i + 0.5) / out_h;
      grid.points[static_cast<std::size_t>(i * out_w + j)] = {(1 - s) * top.x + s * bot.x,
                                                              (1 - s) * top.y + s * bot.y};
    }
  }
  return grid;
}

Tensor bezier_align(Tape& tape, const Tensor& feature_map, const BezierRegion& region, int out_h,
                    int out_w, double spatial_scale) {
  if (!(spatial_scale > 0)) throw ConfigError("bezier_align: spatial_scale must be positive");
  if (feature_map.rank() != 3) throw DimensionError("bezier_align: feature map must be [c,h,w]");
  const SampleGrid grid = region_grid(region, out_h, out_w);
  std::vector<double> coords;
  coords.reserve(grid.points.size() * 2);
  for (const auto& p : grid.points) {
    coords.push_back(p.x * spatial_scale);
    coords.push_back(p.y * spatial_scale);
  }
  const Tensor grid_t = Tensor::from({grid.points.size(), 2}, std::move(coords));
  const Tensor sampled = ops::bilinear_sample(tape, feature_map, grid_t);
  return ops::reshape(tape, sampled,
                      {feature_map.dim(0), static_cast<std::size_t>(out_h), static_cast<std::size_t>(out_w)});
}

Polygon region_to_polygon(const BezierRegion& region, int samples_per_curve) {
  if (samples_per_curve < 2) throw InputError("region_to_polygon: need at least 2 samples per curve");
  Polygon poly;
  poly.reserve(static_cast<std::size_t>(2 * samples_per_curve));
  for (int i = 0; i < samples_per_curve; ++i)
    poly.push_back(bezier_point(region.top, static_cast<double>(i) / (samples_per_curve - 1)));
  for (int i = samples_per_curve - 1; i >= 0; --i)
    poly.push_back(bezier_point(region.bottom, static_cast<double>(i) / (samples_per_curve - 1)));
  return poly;
}

}  // namespace a3s
