#include "a3s/geometry/polygon.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "a3s/errors.hpp"

namespace a3s {

double polygon_signed_area(const Polygon& poly) {
  if (poly.size() < 3) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point& a = poly[i];
    const Point& b = poly[(i + 1) % poly.size()];
    acc += a.x * b.y - b.x * a.y;
  }
  return 0.5 * acc;
}

double polygon_area(const Polygon& poly) { return std::abs(polygon_signed_area(poly)); }

Box polygon_bounds(const Polygon& poly) {
  Box b{INFINITY, INFINITY, -INFINITY, -INFINITY};
  for (const auto& p : poly) {
    b.x0 = std::min(b.x0, p.x);
    b.y0 = std::min(b.y0, p.y);
    b.x1 = std::max(b.x1, p.x);
    b.y1 = std::max(b.y1, p.y);
  }
  return b;
}

bool point_in_polygon(const Polygon& poly, Point p) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Point& a = poly[i];
    const Point& b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x) inside = !inside;
    }
  }
  return inside;
}

namespace {

double cross(Point o, Point a, Point b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

bool segments_intersect(Point p1, Point p2, Point q1, Point q2) {
  const double d1 = cross(q1, q2, p1), d2 = cross(q1, q2, p2);
  const double d3 = cross(p1, p2, q1), d4 = cross(p1, p2, q2);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
    return true;
  auto on_segment = [](Point a, Point b, Point c) {
    return std::min(a.x, b.x) <= c.x && c.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= c.y &&
           c.y <= std::max(a.y, b.y);
  };
  return (d1 == 0 && on_segment(q1, q2, p1)) || (d2 == 0 && on_segment(q1, q2, p2)) ||
         (d3 == 0 && on_segment(p1, p2, q1)) || (d4 == 0 && on_segment(p1, p2, q2));
}

// Half-open index ranges [lo, hi) of samples inside the polygon on one row.
using Spans = std::vector<std::pair<long, long>>;

Spans row_spans(const Polygon& poly, double y, double x_origin, int scale, long width) {
  std::vector<double> xs;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Point& a = poly[i];
    const Point& b = poly[j];
    if ((a.y > y) != (b.y > y)) xs.push_back(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
  }
  std::sort(xs.begin(), xs.end());
  Spans spans;
  for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
    // Sample i sits at x_origin + (i + 0.5)/scale; inside iff xs[k] <= x < xs[k+1].
    const long lo = std::clamp(static_cast<long>(std::ceil((xs[k] - x_origin) * scale - 0.5)), 0L, width);
    const long hi = std::clamp(static_cast<long>(std::ceil((xs[k + 1] - x_origin) * scale - 0.5)), 0L, width);
    if (hi > lo) spans.emplace_back(lo, hi);
  }
  return spans;
}

long span_total(const Spans& s) {
  long n = 0;
  for (auto [lo, hi] : s) n += hi - lo;
  return n;
}

long span_overlap(const Spans& a, const Spans& b) {
  long n = 0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const long lo = std::max(a[i].first, b[j].first);
    const long hi = std::min(a[i].second, b[j].second);
    if (hi > lo) n += hi - lo;
    if (a[i].second < b[j].second)
      ++i;
    else
      ++j;
  }
  return n;
}

}  // namespace

bool is_simple_polygon(const Polygon& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (segments_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n])) return false;
    }
  return true;
}

double polygon_iou(const Polygon& a, const Polygon& b, int raster_scale) {
  if (raster_scale < 1) throw InputError("polygon_iou: raster_scale must be >= 1");
  if (a.size() < 3 && b.size() < 3) return 0.0;
  Polygon joint = a;
  joint.insert(joint.end(), b.begin(), b.end());
  const Box box = polygon_bounds(joint);
  const long nx = static_cast<long>(std::ceil((box.x1 - box.x0) * raster_scale));
  const long ny = static_cast<long>(std::ceil((box.y1 - box.y0) * raster_scale));
  long inter = 0, count_a = 0, count_b = 0;
  for (long r = 0; r < ny; ++r) {
    const double y = box.y0 + (static_cast<double>(r) + 0.5) / raster_scale;
    const Spans sa = a.size() >= 3 ? row_spans(a, y, box.x0, raster_scale, nx) : Spans{};
    const Spans sb = b.size() >= 3 ? row_spans(b, y, box.x0, raster_scale, nx) : Spans{};
    count_a += span_total(sa);
    count_b += span_total(sb);
    inter += span_overlap(sa, sb);
  }
  const long uni = count_a + count_b - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

}  // namespace a3s
