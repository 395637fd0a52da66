#include "polyroom/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "polyroom/hungarian.hpp"

namespace polyroom {

namespace {

bool boxes_overlap(const BoundingBox& a, const BoundingBox& b) {
  return a.min_x < b.max_x && b.min_x < a.max_x && a.min_y < b.max_y && b.min_y < a.max_y;
}

double safe_iou(const Polygon& a, const Polygon& b) {
  try {
    return polygon_iou(a, b);
  } catch (const Error&) {
    return 0.0;
  }
}

double angle_gap(double a, double b) {
  const double d = std::fmod(std::abs(a - b), 360.0);
  return std::min(d, 360.0 - d);
}

void match_corners(const Polygon& pred, const Polygon& gt, const EvalConfig& cfg, MetricsReport& r) {
  const Polygon p = ensure_clockwise(pred), g = ensure_clockwise(gt);
  std::vector<double> cost(g.size() * p.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t j = 0; j < p.size(); ++j) cost[i * p.size() + j] = distance(g[i], p[j]);
  }
  const Assignment a = solve_assignment(cost, g.size(), p.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const std::size_t j = a.row_to_col[i];
    if (j == Assignment::kUnassigned || cost[i * p.size() + j] > cfg.corner_px) continue;
    ++r.corner.matched;
    if (angle_gap(interior_angle_deg(g, i), interior_angle_deg(p, j)) <= cfg.angle_deg) ++r.angle.matched;
  }
}

}  // namespace

double LevelCounts::f1() const {
  const double p = precision(), r = recall();
  return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

LevelCounts& LevelCounts::operator+=(const LevelCounts& o) {
  matched += o.matched;
  predicted += o.predicted;
  gt += o.gt;
  return *this;
}

MetricsReport& MetricsReport::operator+=(const MetricsReport& o) {
  room += o.room;
  corner += o.corner;
  angle += o.angle;
  iou_sum += o.iou_sum;
  scenes += o.scenes;
  return *this;
}

MetricsReport evaluate(const std::vector<Polygon>& pred, const std::vector<Polygon>& gt, const EvalConfig& cfg) {
  MetricsReport r;
  r.scenes = 1;
  r.room.predicted = pred.size();
  r.room.gt = gt.size();
  for (const Polygon& p : pred) r.corner.predicted += p.size();
  for (const Polygon& g : gt) r.corner.gt += g.size();
  r.angle.predicted = r.corner.predicted;
  r.angle.gt = r.corner.gt;
  if (pred.empty() || gt.empty()) return r;

  std::vector<BoundingBox> pb, gb;
  for (const Polygon& p : pred) pb.push_back(bounding_box(p));
  for (const Polygon& g : gt) gb.push_back(bounding_box(g));
  std::vector<double> iou(gt.size() * pred.size(), 0.0);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    for (std::size_t j = 0; j < pred.size(); ++j) {
      if (boxes_overlap(gb[i], pb[j])) iou[i * pred.size() + j] = safe_iou(gt[i], pred[j]);
    }
  }
  std::vector<double> cost(iou.size());
  for (std::size_t k = 0; k < iou.size(); ++k) cost[k] = 1.0 - iou[k];
  const Assignment a = solve_assignment(cost, gt.size(), pred.size());
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const std::size_t j = a.row_to_col[i];
    if (j == Assignment::kUnassigned) continue;
    const double v = iou[i * pred.size() + j];
    if (v < cfg.iou_threshold) continue;
    ++r.room.matched;
    r.iou_sum += v;
    match_corners(pred[j], gt[i], cfg, r);
  }
  return r;
}

MetricsReport evaluate(const Floorplan& pred, const Floorplan& gt, const EvalConfig& cfg) {
  if (pred.width != gt.width || pred.height != gt.height) {
    throw Error(ErrorKind::kDimensionMismatch, "prediction and ground truth use different image frames");
  }
  return evaluate(pred.rooms, gt.rooms, cfg);
}

MetricsReport evaluate(const VectorFloorplan& pred, const Floorplan& gt, const EvalConfig& cfg) {
  return evaluate(pred.to_floorplan(), gt, cfg);
}

nlohmann::json MetricsReport::to_json(const EvalConfig& cfg) const {
  auto level = [](const LevelCounts& c) {
    return nlohmann::json{{"prec", c.precision()}, {"rec", c.recall()}, {"f1", c.f1()},
                          {"matched", c.matched}, {"predicted", c.predicted}, {"gt", c.gt}};
  };
  nlohmann::json room = level(this->room);
  room["iou"] = room_iou();
  return {{"room", room},
          {"corner", level(corner)},
          {"angle", level(angle)},
          {"scenes", scenes},
          {"thresholds", {{"iou", cfg.iou_threshold}, {"corner_px", cfg.corner_px}, {"angle_deg", cfg.angle_deg}}}};
}

std::string MetricsReport::to_table() const {
  std::ostringstream s;
  char line[128];
  std::snprintf(line, sizeof line, "%-7s %7s %7s %7s %7s %9s\n", "level", "prec", "rec", "f1", "iou", "matched");
  s << line;
  auto row = [&](const char* name, const LevelCounts& c, const char* iou) {
    char m[32];
    std::snprintf(m, sizeof m, "%zu/%zu", c.matched, c.gt);
    std::snprintf(line, sizeof line, "%-7s %7.4f %7.4f %7.4f %7s %9s\n", name, c.precision(), c.recall(), c.f1(), iou, m);
    s << line;
  };
  char iou[16];
  std::snprintf(iou, sizeof iou, "%.4f", room_iou());
  row("room", room, iou);
  row("corner", corner, "-");
  row("angle", angle, "-");
  return s.str();
}

}  // namespace polyroom
