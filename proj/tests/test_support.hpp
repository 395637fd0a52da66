#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "polyroom/geometry.hpp"
#include "polyroom/representation.hpp"

namespace polyroom::fixtures {

// Orthogonal polygon monotone in x: columns with random widths, a stepped
// top and a stepped bottom. Clockwise under y-down. Corners merge where
// neighbouring columns share a height.
inline Polygon random_rectilinear(std::mt19937_64& rng, int max_columns = 5, bool integer = false) {
  std::uniform_int_distribution<int> ncols(1, max_columns);
  std::uniform_real_distribution<double> width(6.0, 40.0), top(0.0, 30.0), bottom(60.0, 100.0);
  auto val = [&](std::uniform_real_distribution<double>& d) { return integer ? std::round(d(rng)) : d(rng); };
  const int k = ncols(rng);
  std::vector<double> xs{val(width)};
  std::vector<double> tops, bottoms;
  for (int c = 0; c < k; ++c) {
    xs.push_back(xs.back() + val(width));
    tops.push_back(val(top));
    bottoms.push_back(val(bottom));
  }
  std::vector<Point2> pts;
  // Top edge left to right (y-down: this is clockwise).
  for (int c = 0; c < k; ++c) {
    pts.push_back({xs[c], tops[c]});
    pts.push_back({xs[c + 1], tops[c]});
  }
  for (int c = k - 1; c >= 0; --c) {
    pts.push_back({xs[c + 1], bottoms[c]});
    pts.push_back({xs[c], bottoms[c]});
  }
  // Drop collinear vertices left where neighbouring columns match.
  std::vector<Point2> out;
  const std::size_t n = pts.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 a = pts[(i + n - 1) % n], b = pts[i], c = pts[(i + 1) % n];
    if (b == a) continue;
    if (std::abs(cross(b - a, c - b)) > 1e-12) out.push_back(b);
  }
  Polygon p(out);
  // Random quarter turn / mirror for variety; re-orient afterwards.
  std::uniform_int_distribution<int> pick(0, 7);
  const int t = pick(rng);
  std::vector<Point2> moved;
  for (const Point2& v : p) {
    Point2 q = v;
    if (t & 1) q = {q.y, q.x};
    if (t & 2) q = {200.0 - q.x, q.y};
    if (t & 4) q = {q.x, 200.0 - q.y};
    moved.push_back(q);
  }
  return ensure_clockwise(Polygon(moved));
}

// Arc-length positions of the corners of p, starting at vertex 0.
inline std::vector<double> corner_arcs(const Polygon& p) {
  std::vector<double> s{0.0};
  for (std::size_t i = 1; i < p.size(); ++i) s.push_back(s.back() + distance(p[i - 1], p[i]));
  return s;
}

inline double min_corner_gap(const Polygon& p) {
  const std::vector<double> s = corner_arcs(p);
  const double per = perimeter(p);
  double gap = per - s.back();
  for (std::size_t i = 1; i < s.size(); ++i) gap = std::min(gap, s[i] - s[i - 1]);
  return gap;
}

// Star-shaped simple polygon with random radii, clockwise.
inline Polygon random_star(std::mt19937_64& rng, std::size_t n, Point2 c = {50, 50}, double r0 = 10, double r1 = 40) {
  std::uniform_real_distribution<double> r(r0, r1);
  std::vector<Point2> pts;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = 2.0 * 3.14159265358979323846 * static_cast<double>(i) / static_cast<double>(n);
    const double rad = r(rng);
    pts.push_back({c.x + rad * std::cos(a), c.y + rad * std::sin(a)});
  }
  return ensure_clockwise(Polygon(pts));
}

inline Polygon rect(double x0, double y0, double x1, double y1) {
  return Polygon({{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}});
}

}  // namespace polyroom::fixtures
