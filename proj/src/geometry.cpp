#include "polyroom/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>

namespace polyroom {

double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
double norm(Point2 a) { return std::hypot(a.x, a.y); }
double distance(Point2 a, Point2 b) { return norm(a - b); }

double point_segment_distance(Point2 p, Point2 a, Point2 b) {
  const Point2 ab = b - a;
  const double len2 = dot(ab, ab);
  if (len2 == 0.0) return distance(p, a);
  const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
  return distance(p, a + t * ab);
}

Polygon::Polygon(std::vector<Point2> vertices) {
  vertices_.reserve(vertices.size());
  for (const Point2& v : vertices) {
    if (!std::isfinite(v.x) || !std::isfinite(v.y)) {
      throw Error(ErrorKind::kInvalidPolygon, "non-finite vertex");
    }
    if (vertices_.empty() || distance(vertices_.back(), v) > kMergeTolerance) {
      vertices_.push_back(v);
    }
  }
  while (vertices_.size() > 1 && distance(vertices_.back(), vertices_.front()) <= kMergeTolerance) {
    vertices_.pop_back();
  }
  if (vertices_.size() < 3) {
    throw Error(ErrorKind::kInvalidPolygon,
                "need at least 3 distinct vertices, got " + std::to_string(vertices_.size()));
  }
}

BoundingBox bounding_box(const Polygon& p) {
  BoundingBox box{p[0].x, p[0].y, p[0].x, p[0].y};
  for (const Point2& v : p) {
    box.min_x = std::min(box.min_x, v.x);
    box.min_y = std::min(box.min_y, v.y);
    box.max_x = std::max(box.max_x, v.x);
    box.max_y = std::max(box.max_y, v.y);
  }
  return box;
}

double signed_area(std::span<const Point2> pts) {
  if (pts.size() < 3) throw Error(ErrorKind::kInvalidPolygon, "fewer than 3 vertices");
  double sum = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Point2& a = pts[i];
    const Point2& b = pts[(i + 1) % pts.size()];
    sum += a.x * b.y - b.x * a.y;
  }
  return 0.5 * sum;
}

double signed_area(const Polygon& p) { return signed_area(std::span<const Point2>(p.vertices())); }

Polygon ensure_clockwise(const Polygon& p) {
  if (signed_area(p) >= 0.0) return p;
  std::vector<Point2> reversed(p.vertices().rbegin(), p.vertices().rend());
  return Polygon(std::move(reversed));
}

double perimeter(const Polygon& p) {
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += distance(p[i], p[(i + 1) % p.size()]);
  return total;
}

double angle_cosine(std::span<const Point2> closed, std::size_t j) {
  const std::size_t n = closed.size();
  if (n < 3 || j >= n) throw Error(ErrorKind::kInvalidPolygon, "vertex index out of range");
  const Point2 a = closed[(j + n - 1) % n] - closed[j];
  const Point2 b = closed[(j + 1) % n] - closed[j];
  const double la = norm(a);
  const double lb = norm(b);
  if (la == 0.0 || lb == 0.0) throw Error(ErrorKind::kDegenerateEdge, "zero-length edge at vertex " + std::to_string(j));
  return std::clamp(dot(a, b) / (la * lb), -1.0, 1.0);
}

double angle_cosine(const Polygon& p, std::size_t j) {
  return angle_cosine(std::span<const Point2>(p.vertices()), j);
}

double interior_angle_deg(const Polygon& p, std::size_t j) {
  const std::size_t n = p.size();
  const Point2 to_prev = p[(j + n - 1) % n] - p[j];
  const Point2 to_next = p[(j + 1) % n] - p[j];
  double deg = std::atan2(cross(to_next, to_prev), dot(to_next, to_prev)) * 180.0 / std::numbers::pi;
  if (deg < 0.0) deg += 360.0;
  return deg;
}

bool point_in_polygon(std::span<const Point2> pts, Point2 q) {
  bool inside = false;
  const std::size_t n = pts.size();
  for (std::size_t i = 0, k = n - 1; i < n; k = i++) {
    const Point2& a = pts[i];
    const Point2& b = pts[k];
    if ((a.y > q.y) != (b.y > q.y)) {
      const double x = a.x + (q.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (q.x < x) inside = !inside;
    }
  }
  return inside;
}

namespace {

int orient(Point2 a, Point2 b, Point2 c) {
  const double v = cross(b - a, c - a);
  return (v > 0.0) - (v < 0.0);
}

bool on_segment(Point2 a, Point2 b, Point2 q) {
  return std::min(a.x, b.x) <= q.x && q.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= q.y &&
         q.y <= std::max(a.y, b.y);
}

bool segments_touch(Point2 a, Point2 b, Point2 c, Point2 d) {
  const int o1 = orient(a, b, c), o2 = orient(a, b, d), o3 = orient(c, d, a), o4 = orient(c, d, b);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(a, b, c)) return true;
  if (o2 == 0 && on_segment(a, b, d)) return true;
  if (o3 == 0 && on_segment(c, d, a)) return true;
  if (o4 == 0 && on_segment(c, d, b)) return true;
  return false;
}

// Sorted x-crossings of a horizontal line with the polygon's edges.
void row_crossings(std::span<const Point2> pts, double y, std::vector<double>& xs) {
  xs.clear();
  const std::size_t n = pts.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& a = pts[i];
    const Point2& b = pts[(i + 1) % n];
    if ((a.y > y) != (b.y > y)) xs.push_back(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
  }
  std::sort(xs.begin(), xs.end());
}

// Marks samples x0 + (i + 0.5) * step that lie inside, for one scanline.
void fill_row(const std::vector<double>& xs, double x0, double step, std::vector<char>& row) {
  std::fill(row.begin(), row.end(), 0);
  const long count = static_cast<long>(row.size());
  for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
    // Sample i is inside when xs[k] <= centre_i < xs[k+1].
    long first = static_cast<long>(std::ceil((xs[k] - x0) / step - 0.5));
    long last = static_cast<long>(std::ceil((xs[k + 1] - x0) / step - 0.5)) - 1;
    first = std::max(first, 0L);
    last = std::min(last, count - 1);
    for (long i = first; i <= last; ++i) row[i] = 1;
  }
}

}  // namespace

bool is_simple(const Polygon& p) {
  const std::size_t n = p.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 a = p[i], b = p[(i + 1) % n];
    for (std::size_t k = i + 1; k < n; ++k) {
      const Point2 c = p[k], d = p[(k + 1) % n];
      const bool adjacent = (k == i + 1) || (i == 0 && k == n - 1);
      if (adjacent) {
        // Shared endpoint is fine; folding back along the same line is not.
        const Point2 shared = (k == i + 1) ? b : a;
        const Point2 other_ab = (k == i + 1) ? a : b;
        const Point2 other_cd = (k == i + 1) ? d : c;
        if (orient(other_ab, shared, other_cd) == 0 && dot(other_ab - shared, other_cd - shared) > 0.0) {
          return false;
        }
        continue;
      }
      if (segments_touch(a, b, c, d)) return false;
    }
  }
  return true;
}

double polygon_iou(const Polygon& a, const Polygon& b) {
  const BoundingBox ba = bounding_box(a), bb = bounding_box(b);
  const double x0 = std::min(ba.min_x, bb.min_x), x1 = std::max(ba.max_x, bb.max_x);
  const double y0 = std::min(ba.min_y, bb.min_y), y1 = std::max(ba.max_y, bb.max_y);
  constexpr double kSamplesPerPixel = 4.0;
  constexpr double kMaxSamples = 1024.0;
  const double nx_f = std::min(std::ceil((x1 - x0) * kSamplesPerPixel), kMaxSamples);
  const double ny_f = std::min(std::ceil((y1 - y0) * kSamplesPerPixel), kMaxSamples);
  if (nx_f < 1.0 || ny_f < 1.0) throw Error(ErrorKind::kUndefinedIoU, "zero-extent union");
  const auto nx = static_cast<std::size_t>(nx_f), ny = static_cast<std::size_t>(ny_f);
  const double sx = (x1 - x0) / nx_f, sy = (y1 - y0) / ny_f;

  std::vector<double> xs;
  std::vector<char> row_a(nx), row_b(nx);
  std::size_t inter = 0, uni = 0;
  for (std::size_t r = 0; r < ny; ++r) {
    const double y = y0 + (static_cast<double>(r) + 0.5) * sy;
    row_crossings(a.vertices(), y, xs);
    fill_row(xs, x0, sx, row_a);
    row_crossings(b.vertices(), y, xs);
    fill_row(xs, x0, sx, row_b);
    for (std::size_t c = 0; c < nx; ++c) {
      inter += static_cast<std::size_t>(row_a[c] & row_b[c]);
      uni += static_cast<std::size_t>(row_a[c] | row_b[c]);
    }
  }
  if (uni == 0) throw Error(ErrorKind::kUndefinedIoU, "zero-area union");
  return static_cast<double>(inter) / static_cast<double>(uni);
}

Mask rasterize(const Polygon& p, std::size_t height, std::size_t width) {
  Mask mask(height, width, 0);
  std::vector<double> xs;
  std::vector<char> row(width);
  for (std::size_t r = 0; r < height; ++r) {
    row_crossings(p.vertices(), static_cast<double>(r) + 0.5, xs);
    fill_row(xs, 0.0, 1.0, row);
    for (std::size_t c = 0; c < width; ++c) mask(r, c) = row[c] ? 1 : 0;
  }
  return mask;
}

Polygon dp_simplify(const Polygon& p, double eps) {
  if (!(eps >= 0.0)) throw Error(ErrorKind::kContract, "dp_simplify eps must be >= 0");
  const std::size_t n = p.size();

  // Anchors: the lexicographically first farthest-apart pair.
  std::size_t ia = 0, ib = 1;
  double best = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = i + 1; k < n; ++k) {
      const double d = distance(p[i], p[k]);
      if (d > best) {
        best = d;
        ia = i;
        ib = k;
      }
    }
  }

  std::vector<char> keep(n, 0);
  keep[ia] = keep[ib] = 1;
  // Chains are cyclic index ranges [start, end] with end measured past n if wrapped.
  std::vector<std::pair<std::size_t, std::size_t>> stack{{ia, ib}, {ib, ia + n}};
  while (!stack.empty()) {
    const auto [s, e] = stack.back();
    stack.pop_back();
    if (e - s < 2) continue;
    double dmax = -1.0;
    std::size_t imax = s;
    for (std::size_t i = s + 1; i < e; ++i) {
      const double d = point_segment_distance(p[i % n], p[s % n], p[e % n]);
      if (d > dmax) {
        dmax = d;
        imax = i;
      }
    }
    if (dmax >= eps) {
      keep[imax % n] = 1;
      stack.emplace_back(s, imax);
      stack.emplace_back(imax, e);
    }
  }

  std::vector<Point2> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (keep[i]) out.push_back(p[i]);
  }
  if (out.size() < 3) throw Error(ErrorKind::kDegenerateResult, "simplification collapsed below 3 vertices");
  return Polygon(std::move(out));
}

}  // namespace polyroom
