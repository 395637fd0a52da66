#pragma once

#include <cstddef>
#include <vector>

#include "polyroom/geometry.hpp"

namespace polyroom {

struct LabeledVertex {
  Point2 p;
  int label = 0;  // 1 for a true corner

  bool operator==(const LabeledVertex&) const = default;
};

// Fixed-length clockwise vertex sequence for one room, starting at its
// upper-left corner.
struct RoomSequence {
  std::vector<LabeledVertex> vertices;

  std::size_t size() const { return vertices.size(); }
  std::size_t corner_count() const;
  std::vector<Point2> points() const;
  bool operator==(const RoomSequence&) const = default;
};

struct SampledFloorplan {
  std::vector<RoomSequence> rooms;
  double width = 0.0;
  double height = 0.0;
};

inline constexpr std::size_t kDefaultSamples = 40;

// Rotates so vertex 0 minimises x + y (ties: smaller y, then smaller x).
Polygon normalize_start(const Polygon& p);

// n points at arc length k * perimeter / n from vertex 0, all labelled 0.
// Throws kCapacity if n < max(4, p.size()).
RoomSequence uniform_sample(const Polygon& p, std::size_t n);

// Same sampling without the capacity check; used for mask-derived queries.
std::vector<Point2> sample_contour(const Polygon& p, std::size_t n);

// Replaces the arc-length-nearest sample of every corner with the corner
// itself and labels it 1. Collisions push the later corner to the next free
// index clockwise.
RoomSequence snap_corners(const RoomSequence& seq, const Polygon& p);

// Polygon of the label-1 vertices; throws kDegenerateResult below three.
Polygon sequence_to_polygon(const RoomSequence& seq);

// ensure_clockwise -> normalize_start -> uniform_sample -> snap_corners.
RoomSequence encode_room(const Polygon& p, std::size_t n);
SampledFloorplan encode_floorplan(const Floorplan& fp, std::size_t n);

}  // namespace polyroom
