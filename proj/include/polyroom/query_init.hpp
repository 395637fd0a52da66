#pragma once

#include <cstdint>
#include <vector>

#include "polyroom/dataio.hpp"
#include "polyroom/geometry.hpp"

namespace polyroom {

// M x N x 2 normalised vertex coordinates (x / width, y / height), row-major.
struct RoomQueries {
  std::size_t rooms = 0;     // M
  std::size_t vertices = 0;  // N
  std::vector<double> coords;
  std::size_t valid_count = 0;  // leading rows derived from masks

  double x(std::size_t m, std::size_t n) const { return coords[(m * vertices + n) * 2]; }
  double y(std::size_t m, std::size_t n) const { return coords[(m * vertices + n) * 2 + 1]; }
  bool operator==(const RoomQueries&) const = default;
};

/// Outer boundary of the largest 4-connected component, traced along pixel
/// edges (so a filled rectangle yields its pixel-boundary rectangle), then
/// dp_simplify(1 px), made clockwise and start-normalised. Holes are ignored.
Polygon mask_to_polygon(const Mask& mask);

// Rows 0..k-1 come from the masks (sorted by descending area), the rest are
// i.i.d. uniform in [0, 1]. Throws kCapacity when masks.size() > m.
RoomQueries init_queries(const InstanceMasks& masks, std::size_t m, std::size_t n, std::uint64_t seed);

// Ablation: every row random, but valid_count still equals the mask count.
RoomQueries init_queries_random(std::size_t valid_count, std::size_t m, std::size_t n, std::uint64_t seed);

}  // namespace polyroom
