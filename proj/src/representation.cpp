#include "polyroom/representation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace polyroom {

std::size_t RoomSequence::corner_count() const {
  return static_cast<std::size_t>(
      std::count_if(vertices.begin(), vertices.end(), [](const LabeledVertex& v) { return v.label == 1; }));
}

std::vector<Point2> RoomSequence::points() const {
  std::vector<Point2> pts;
  pts.reserve(vertices.size());
  for (const auto& v : vertices) pts.push_back(v.p);
  return pts;
}

Polygon normalize_start(const Polygon& p) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i) {
    const double s = p[i].x + p[i].y, sb = p[best].x + p[best].y;
    if (s < sb || (s == sb && (p[i].y < p[best].y || (p[i].y == p[best].y && p[i].x < p[best].x)))) {
      best = i;
    }
  }
  std::vector<Point2> rotated(p.vertices());
  std::rotate(rotated.begin(), rotated.begin() + static_cast<long>(best), rotated.end());
  return Polygon(std::move(rotated));
}

namespace {

// Cumulative arc length at each vertex, plus the total perimeter at the end.
std::vector<double> arc_positions(const Polygon& p) {
  std::vector<double> s(p.size() + 1, 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) s[i + 1] = s[i] + distance(p[i], p[(i + 1) % p.size()]);
  return s;
}

}  // namespace

std::vector<Point2> sample_contour(const Polygon& p, std::size_t n) {
  if (n == 0) throw Error(ErrorKind::kCapacity, "sample count must be positive");
  const std::vector<double> s = arc_positions(p);
  const double total = s.back();
  std::vector<Point2> out;
  out.reserve(n);
  std::size_t edge = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double target = total * static_cast<double>(k) / static_cast<double>(n);
    while (edge + 1 < p.size() && s[edge + 1] <= target) ++edge;
    const double len = s[edge + 1] - s[edge];
    const double t = len > 0.0 ? (target - s[edge]) / len : 0.0;
    const Point2 a = p[edge];
    const Point2 b = p[(edge + 1) % p.size()];
    out.push_back(a + t * (b - a));
  }
  return out;
}

RoomSequence uniform_sample(const Polygon& p, std::size_t n) {
  if (n < std::max<std::size_t>(4, p.size())) {
    throw Error(ErrorKind::kCapacity,
                "cannot sample " + std::to_string(p.size()) + " corners into " + std::to_string(n) + " vertices");
  }
  RoomSequence seq;
  seq.vertices.reserve(n);
  for (const Point2& q : sample_contour(p, n)) seq.vertices.push_back({q, 0});
  return seq;
}

RoomSequence snap_corners(const RoomSequence& seq, const Polygon& p) {
  const std::size_t n = seq.size();
  const std::size_t corners = p.size();
  if (corners > n) {
    throw Error(ErrorKind::kCapacity, std::to_string(corners) + " corners exceed " + std::to_string(n) + " samples");
  }
  const std::vector<double> s = arc_positions(p);
  const double spacing = s.back() / static_cast<double>(n);

  RoomSequence out = seq;
  long previous = -1;
  for (std::size_t c = 0; c < corners; ++c) {
    // Nearest sample by arc length; a half-way tie goes to the earlier index.
    long idx = static_cast<long>(std::ceil(s[c] / spacing - 0.5));
    // Keep traversal order: after the previous corner, and leave room for the rest.
    idx = std::max(idx, previous + 1);
    idx = std::min(idx, static_cast<long>(n - (corners - c)));
    out.vertices[static_cast<std::size_t>(idx)] = {p[c], 1};
    previous = idx;
  }
  return out;
}

Polygon sequence_to_polygon(const RoomSequence& seq) {
  std::vector<Point2> corners;
  for (const auto& v : seq.vertices) {
    if (v.label == 1) corners.push_back(v.p);
  }
  if (corners.size() < 3) {
    throw Error(ErrorKind::kDegenerateResult, "sequence has " + std::to_string(corners.size()) + " corners");
  }
  return Polygon(std::move(corners));
}

RoomSequence encode_room(const Polygon& p, std::size_t n) {
  const Polygon normalized = normalize_start(ensure_clockwise(p));
  return snap_corners(uniform_sample(normalized, n), normalized);
}

SampledFloorplan encode_floorplan(const Floorplan& fp, std::size_t n) {
  SampledFloorplan out;
  out.width = fp.width;
  out.height = fp.height;
  out.rooms.reserve(fp.rooms.size());
  for (const Polygon& room : fp.rooms) out.rooms.push_back(encode_room(room, n));
  return out;
}

}  // namespace polyroom
