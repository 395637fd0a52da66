#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "polyroom/error.hpp"
#include "polyroom/grid.hpp"

namespace polyroom {

// Pixel-space point, image convention (y grows downward).
struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Point2 operator*(double s, Point2 a) { return {s * a.x, s * a.y}; }
  bool operator==(const Point2&) const = default;
};

double dot(Point2 a, Point2 b);
double cross(Point2 a, Point2 b);
double norm(Point2 a);
double distance(Point2 a, Point2 b);
// Euclidean distance from p to the closed segment [a, b].
double point_segment_distance(Point2 p, Point2 a, Point2 b);

/// Closed polygon with at least three vertices.
///
/// Construction merges consecutive duplicates (tolerance 1e-9 px, including
/// the wrap-around pair) and rejects anything left with fewer than three
/// vertices. Orientation and simplicity are not enforced here: use
/// ensure_clockwise() and is_simple() where they matter.
class Polygon {
 public:
  static constexpr double kMergeTolerance = 1e-9;

  explicit Polygon(std::vector<Point2> vertices);

  std::size_t size() const { return vertices_.size(); }
  const Point2& operator[](std::size_t i) const { return vertices_[i]; }
  const std::vector<Point2>& vertices() const { return vertices_; }
  auto begin() const { return vertices_.begin(); }
  auto end() const { return vertices_.end(); }

  bool operator==(const Polygon&) const = default;

 private:
  std::vector<Point2> vertices_;
};

struct Floorplan {
  std::vector<Polygon> rooms;
  double width = 0.0;
  double height = 0.0;

  bool operator==(const Floorplan&) const = default;
};

struct BoundingBox {
  double min_x, min_y, max_x, max_y;
};

BoundingBox bounding_box(const Polygon& p);

// Shoelace area; positive iff clockwise under y-down axes.
double signed_area(const Polygon& p);
double signed_area(std::span<const Point2> pts);

Polygon ensure_clockwise(const Polygon& p);
double perimeter(const Polygon& p);

// Cosine of the angle at vertex j between (v[j-1] - v[j]) and (v[j+1] - v[j]),
// neighbours taken cyclically. Throws kDegenerateEdge on a zero-length edge.
double angle_cosine(const Polygon& p, std::size_t j);
double angle_cosine(std::span<const Point2> closed, std::size_t j);

// Interior angle in degrees, in (0, 360), for a clockwise polygon.
double interior_angle_deg(const Polygon& p, std::size_t j);

bool point_in_polygon(std::span<const Point2> pts, Point2 q);
bool is_simple(const Polygon& p);

// IoU by rasterising both polygons on a shared 4x super-sampled grid covering
// the union bounding box (at most 1024 samples per side).
double polygon_iou(const Polygon& a, const Polygon& b);

// Fill a mask with the pixels whose centres fall inside the polygon.
Mask rasterize(const Polygon& p, std::size_t height, std::size_t width);

/// Douglas-Peucker on the closed loop, split at its two farthest-apart
/// vertices. A vertex survives if its distance to the current chord is at
/// least eps, so eps == 0 keeps everything. Output is an order-preserving
/// subset of the input; throws kDegenerateResult below three vertices.
Polygon dp_simplify(const Polygon& p, double eps);

}  // namespace polyroom
