#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "polyroom/autograd.hpp"
#include "polyroom/representation.hpp"

namespace polyroom {

// Ground truth for one scene in the layouts the losses consume.
struct SceneTarget {
  std::size_t vertices = 0;                  // N
  double width = 0.0, height = 0.0;          // pixels
  std::vector<std::vector<double>> coords;   // per room, N*2 normalised
  std::vector<std::vector<int>> labels;      // per room, N corner labels
  std::vector<std::vector<double>> cosines;  // per room, N vertex-angle cosines (pixel space)

  std::size_t rooms() const { return coords.size(); }
};

SceneTarget make_target(const SampledFloorplan& sampled);

struct MatchResult {
  std::vector<std::size_t> assignment;  // gt room i -> predicted row
  double total_cost = 0.0;
};

struct LossWeights {
  double cls = 2.0;
  double coord = 5.0;
  double ras = 1.0;
  double ang = 1.0;
};

struct RasterSettings {
  std::size_t resolution = 64;  // R
  double tau = 1.0;             // softmin / sigmoid temperature, pixels
};

// Sum over aligned vertices of |dx| + |dy|.
double pair_cost(std::span<const double> pred, std::span<const double> gt);

// Hungarian assignment of gt rooms to rows of the M x N x 2 prediction.
MatchResult match_rooms(std::span<const double> pred, std::size_t m, const SceneTarget& target);

// Mean 2-way cross-entropy over all M*N vertices; unmatched rows target 0.
ag::Tensor loss_cls(const ag::Tensor& logits, const MatchResult& match, const SceneTarget& target);
// Mean over matched rooms of pair_cost / N.
ag::Tensor loss_coord(const ag::Tensor& queries, const MatchResult& match, const SceneTarget& target);
// Mean over matched rooms of (1/N) sum_j |cos_gt - cos_pred|.
ag::Tensor loss_angle(const ag::Tensor& queries, const MatchResult& match, const SceneTarget& target);
// Mean over matched rooms of the soft-raster occupancy L1.
ag::Tensor loss_raster(const ag::Tensor& queries, const MatchResult& match, const SceneTarget& target,
                       const RasterSettings& raster);

// Fused angle term for one closed sequence: (1/N) sum_j |gt[j] - cos_j(points)|,
// points [N, 2] in pixels. Vertices with an edge shorter than 1e-8 are skipped.
ag::Tensor angle_l1(const ag::Tensor& points, std::span<const double> gt_cosines);

/// Soft occupancy O(p) = sigmoid(-sd(p) / tau) of both polygons on an R x R
/// grid over their padded joint bounding box; returns mean |O_pred - O_gt|.
/// |sd| is a softmin over edge distances and its sign comes from a
/// crossing-number test, held constant for the gradient. pred [N, 2] pixels.
ag::Tensor soft_raster_l1(const ag::Tensor& pred, std::span<const Point2> gt, const RasterSettings& raster);

// Hard-threshold counterpart of soft_raster_l1 used as an oracle: fraction of
// grid samples inside exactly one polygon on the same grid.
double hard_raster_l1(std::span<const Point2> pred, std::span<const Point2> gt, const RasterSettings& raster);

}  // namespace polyroom
