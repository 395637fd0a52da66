#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "polyroom/extraction.hpp"
#include "polyroom/geometry.hpp"

namespace polyroom {

struct EvalConfig {
  double iou_threshold = 0.5;
  double corner_px = 10.0;
  double angle_deg = 5.0;
};

struct LevelCounts {
  std::size_t matched = 0, predicted = 0, gt = 0;

  double precision() const { return predicted == 0 ? 0.0 : static_cast<double>(matched) / static_cast<double>(predicted); }
  double recall() const { return gt == 0 ? 0.0 : static_cast<double>(matched) / static_cast<double>(gt); }
  double f1() const;
  LevelCounts& operator+=(const LevelCounts& o);
};

// Counts are summed across scenes, so aggregated scores are micro averages.
struct MetricsReport {
  LevelCounts room, corner, angle;
  double iou_sum = 0.0;  // over matched pairs; unmatched gt rooms add 0
  std::size_t scenes = 0;

  double room_iou() const { return room.gt == 0 ? 0.0 : iou_sum / static_cast<double>(room.gt); }
  MetricsReport& operator+=(const MetricsReport& o);
  nlohmann::json to_json(const EvalConfig& cfg) const;
  std::string to_table() const;
};

MetricsReport evaluate(const std::vector<Polygon>& pred, const std::vector<Polygon>& gt, const EvalConfig& cfg);
// Throws kDimensionMismatch when the two frames differ.
MetricsReport evaluate(const Floorplan& pred, const Floorplan& gt, const EvalConfig& cfg);
MetricsReport evaluate(const VectorFloorplan& pred, const Floorplan& gt, const EvalConfig& cfg);

}  // namespace polyroom
