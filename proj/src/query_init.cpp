#include "polyroom/query_init.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <random>

#include "polyroom/representation.hpp"

namespace polyroom {

namespace {

// Largest 4-connected foreground component, first in raster order on ties.
Mask largest_component(const Mask& mask) {
  const long h = static_cast<long>(mask.height()), w = static_cast<long>(mask.width());
  Grid<int> label(mask.height(), mask.width(), -1);
  std::vector<std::size_t> sizes;
  std::vector<std::pair<long, long>> stack;
  for (long r = 0; r < h; ++r) {
    for (long c = 0; c < w; ++c) {
      if (!mask(r, c) || label(r, c) >= 0) continue;
      const int id = static_cast<int>(sizes.size());
      std::size_t count = 0;
      stack.push_back({r, c});
      label(r, c) = id;
      while (!stack.empty()) {
        const auto [pr, pc] = stack.back();
        stack.pop_back();
        ++count;
        constexpr std::array<std::pair<long, long>, 4> kSteps{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
        for (const auto& [dr, dc] : kSteps) {
          const long nr = pr + dr, nc = pc + dc;
          if (mask.at_or(nr, nc) && label(nr, nc) < 0) {
            label(nr, nc) = id;
            stack.push_back({nr, nc});
          }
        }
      }
      sizes.push_back(count);
    }
  }
  if (sizes.empty()) throw Error(ErrorKind::kEmptyMask, "mask has no foreground pixels");
  const int best = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  Mask out(mask.height(), mask.width(), 0);
  for (std::size_t i = 0; i < out.size(); ++i) out.cells()[i] = label.cells()[i] == best ? 1 : 0;
  return out;
}

struct Step {
  long dx, dy;
};
// Clockwise order under y-down: east, south, west, north.
constexpr std::array<Step, 4> kDirs{{{1, 0}, {0, 1}, {-1, 0}, {0, -1}}};

// Pixel on the right / left of the lattice edge leaving (x, y) in direction d.
std::pair<long, long> right_pixel(long x, long y, int d) {
  switch (d) {
    case 0: return {x, y};
    case 1: return {x - 1, y};
    case 2: return {x - 1, y - 1};
    default: return {x, y - 1};
  }
}
std::pair<long, long> left_pixel(long x, long y, int d) {
  switch (d) {
    case 0: return {x, y - 1};
    case 1: return {x, y};
    case 2: return {x - 1, y};
    default: return {x - 1, y - 1};
  }
}

// Crack-following trace of the outer boundary with the interior kept on the
// right. Right turns are preferred, which keeps diagonal neighbours apart.
std::vector<Point2> trace_outer_boundary(const Mask& comp) {
  long sx = -1, sy = -1;
  for (long r = 0; r < static_cast<long>(comp.height()) && sx < 0; ++r) {
    for (long c = 0; c < static_cast<long>(comp.width()); ++c) {
      if (comp(r, c)) {
        sx = c;
        sy = r;
        break;
      }
    }
  }
  auto fg = [&](std::pair<long, long> px) { return comp.at_or(px.second, px.first) != 0; };
  auto edge_ok = [&](long x, long y, int d) { return fg(right_pixel(x, y, d)) && !fg(left_pixel(x, y, d)); };

  std::vector<Point2> corners;
  long x = sx, y = sy;
  int dir = 0;
  const std::size_t limit = 4 * comp.size() + 8;
  for (std::size_t steps = 0; steps < limit; ++steps) {
    x += kDirs[static_cast<std::size_t>(dir)].dx;
    y += kDirs[static_cast<std::size_t>(dir)].dy;
    if (x == sx && y == sy) break;
    int next = -1;
    for (int turn : {1, 0, 3}) {
      const int cand = (dir + turn) % 4;
      if (edge_ok(x, y, cand)) {
        next = cand;
        break;
      }
    }
    if (next < 0) throw Error(ErrorKind::kEmptyMask, "boundary trace lost the contour");
    if (next != dir) corners.push_back({static_cast<double>(x), static_cast<double>(y)});
    dir = next;
  }
  // The start is always a corner: we arrive heading north and leave east.
  corners.insert(corners.begin(), Point2{static_cast<double>(sx), static_cast<double>(sy)});
  return corners;
}

std::size_t mask_area(const Mask& m) {
  return static_cast<std::size_t>(std::count_if(m.cells().begin(), m.cells().end(), [](unsigned char v) { return v != 0; }));
}

}  // namespace

Polygon mask_to_polygon(const Mask& mask) {
  const Mask comp = largest_component(mask);
  Polygon contour(trace_outer_boundary(comp));
  Polygon simplified = contour;
  try {
    simplified = dp_simplify(contour, 1.0);
  } catch (const Error&) {
    // Tiny blobs can collapse; keep the raw trace.
  }
  return normalize_start(ensure_clockwise(simplified));
}

RoomQueries init_queries(const InstanceMasks& masks, std::size_t m, std::size_t n, std::uint64_t seed) {
  if (masks.masks.size() > m) {
    throw Error(ErrorKind::kCapacity, std::to_string(masks.masks.size()) + " masks exceed M = " + std::to_string(m));
  }
  RoomQueries q = init_queries_random(masks.masks.size(), m, n, seed);
  std::vector<std::size_t> order(masks.masks.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::size_t> areas;
  for (const Mask& mk : masks.masks) areas.push_back(mask_area(mk));
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return areas[a] > areas[b]; });

  for (std::size_t row = 0; row < order.size(); ++row) {
    const Mask& mk = masks.masks[order[row]];
    const double w = static_cast<double>(mk.width()), h = static_cast<double>(mk.height());
    const std::vector<Point2> pts = sample_contour(mask_to_polygon(mk), n);
    for (std::size_t j = 0; j < n; ++j) {
      q.coords[(row * n + j) * 2] = std::clamp(pts[j].x / w, 0.0, 1.0);
      q.coords[(row * n + j) * 2 + 1] = std::clamp(pts[j].y / h, 0.0, 1.0);
    }
  }
  return q;
}

RoomQueries init_queries_random(std::size_t valid_count, std::size_t m, std::size_t n, std::uint64_t seed) {
  if (valid_count > m) throw Error(ErrorKind::kCapacity, "valid rows exceed M");
  RoomQueries q;
  q.rooms = m;
  q.vertices = n;
  q.valid_count = valid_count;
  q.coords.resize(m * n * 2);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (double& v : q.coords) v = unit(rng);
  return q;
}

}  // namespace polyroom
