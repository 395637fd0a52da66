#include "polyroom/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "polyroom/hungarian.hpp"

namespace polyroom {

using ag::Tensor;

namespace {

constexpr double kEdgeEps = 1e-8;

double guarded_cosine(std::span<const Point2> pts, std::size_t j) {
  const std::size_t n = pts.size();
  const Point2 a = pts[(j + n - 1) % n] - pts[j];
  const Point2 b = pts[(j + 1) % n] - pts[j];
  const double la = norm(a), lb = norm(b);
  if (la < kEdgeEps || lb < kEdgeEps) return -1.0;
  return dot(a, b) / (la * lb);
}

Point2 closest_on_segment(Point2 p, Point2 a, Point2 b) {
  const Point2 ab = b - a;
  const double len2 = dot(ab, ab);
  const double t = len2 > 0.0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
  return a + t * ab;
}

std::vector<Point2> to_pixels(std::span<const double> coords, double width, double height) {
  std::vector<Point2> pts(coords.size() / 2);
  for (std::size_t j = 0; j < pts.size(); ++j) pts[j] = {coords[2 * j] * width, coords[2 * j + 1] * height};
  return pts;
}

// Rows of the [M, N, 2] prediction for the matched rooms, as [k, N*2].
Tensor matched_rows(const Tensor& queries, const MatchResult& match, std::size_t n) {
  const std::size_t m = queries.numel() / (n * 2);
  return ag::gather_rows(ag::reshape(queries, {m, n * 2}), match.assignment);
}

Tensor pixel_scale(std::size_t n, double width, double height) {
  std::vector<double> s(n * 2);
  for (std::size_t j = 0; j < n; ++j) {
    s[2 * j] = width;
    s[2 * j + 1] = height;
  }
  return Tensor::from({n, 2}, std::move(s));
}

// Sample grid over the padded joint bounding box.
struct RasterGrid {
  double x0, y0, sx, sy;
  std::size_t r;
  Point2 sample(std::size_t i) const {
    return {x0 + (static_cast<double>(i % r) + 0.5) * sx, y0 + (static_cast<double>(i / r) + 0.5) * sy};
  }
};

RasterGrid make_grid(std::span<const Point2> a, std::span<const Point2> b, const RasterSettings& raster) {
  if (raster.resolution == 0 || !(raster.tau > 0.0)) throw Error(ErrorKind::kContract, "raster settings must be positive");
  double min_x = std::numeric_limits<double>::infinity(), min_y = min_x;
  double max_x = -min_x, max_y = -min_x;
  for (auto pts : {a, b}) {
    for (const Point2& p : pts) {
      min_x = std::min(min_x, p.x);
      min_y = std::min(min_y, p.y);
      max_x = std::max(max_x, p.x);
      max_y = std::max(max_y, p.y);
    }
  }
  if (!(max_x > min_x) || !(max_y > min_y)) throw Error(ErrorKind::kDegenerateExtent, "raster loss bounding box has zero extent");
  const double pad = 3.0 * raster.tau;
  RasterGrid g;
  g.r = raster.resolution;
  g.x0 = min_x - pad;
  g.y0 = min_y - pad;
  g.sx = (max_x - min_x + 2.0 * pad) / static_cast<double>(g.r);
  g.sy = (max_y - min_y + 2.0 * pad) / static_cast<double>(g.r);
  return g;
}

struct SoftSample {
  double occupancy;
  double sign;  // -1 inside, +1 outside
  double min_dist;
  double weight_sum;  // sum_e exp(-(d_e - min) / tau)
};

SoftSample soft_occupancy(std::span<const Point2> poly, Point2 p, double tau) {
  const std::size_t n = poly.size();
  double dmin = std::numeric_limits<double>::infinity();
  thread_local std::vector<double> dist;
  dist.resize(n);
  for (std::size_t e = 0; e < n; ++e) {
    dist[e] = point_segment_distance(p, poly[e], poly[(e + 1) % n]);
    dmin = std::min(dmin, dist[e]);
  }
  double s = 0.0;
  for (std::size_t e = 0; e < n; ++e) s += std::exp(-(dist[e] - dmin) / tau);
  const double soft = dmin - tau * std::log(s);
  const double sign = point_in_polygon(poly, p) ? -1.0 : 1.0;
  const double occ = 1.0 / (1.0 + std::exp(sign * soft / tau));
  return {occ, sign, dmin, s};
}

}  // namespace

SceneTarget make_target(const SampledFloorplan& sampled) {
  SceneTarget t;
  t.width = sampled.width;
  t.height = sampled.height;
  for (const RoomSequence& room : sampled.rooms) {
    if (t.vertices == 0) t.vertices = room.size();
    if (room.size() != t.vertices) throw Error(ErrorKind::kShape, "rooms sampled with different N");
    std::vector<double> coords;
    std::vector<int> labels;
    for (const LabeledVertex& v : room.vertices) {
      coords.push_back(v.p.x / t.width);
      coords.push_back(v.p.y / t.height);
      labels.push_back(v.label);
    }
    const std::vector<Point2> pts = room.points();
    std::vector<double> cosines(pts.size());
    for (std::size_t j = 0; j < pts.size(); ++j) cosines[j] = guarded_cosine(pts, j);
    t.coords.push_back(std::move(coords));
    t.labels.push_back(std::move(labels));
    t.cosines.push_back(std::move(cosines));
  }
  return t;
}

double pair_cost(std::span<const double> pred, std::span<const double> gt) {
  if (pred.size() != gt.size()) throw Error(ErrorKind::kShape, "pair_cost length mismatch");
  double c = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) c += std::abs(pred[i] - gt[i]);
  return c;
}

MatchResult match_rooms(std::span<const double> pred, std::size_t m, const SceneTarget& target) {
  const std::size_t gt = target.rooms(), row = target.vertices * 2;
  if (gt > m) throw Error(ErrorKind::kCapacity, std::to_string(gt) + " rooms exceed M = " + std::to_string(m));
  if (pred.size() != m * row) throw Error(ErrorKind::kShape, "prediction does not hold M x N x 2 values");
  std::vector<double> cost(gt * m);
  for (std::size_t i = 0; i < gt; ++i) {
    for (std::size_t k = 0; k < m; ++k) cost[i * m + k] = pair_cost(pred.subspan(k * row, row), target.coords[i]);
  }
  const Assignment a = solve_assignment(cost, gt, m);
  return {a.row_to_col, a.cost};
}

Tensor loss_cls(const Tensor& logits, const MatchResult& match, const SceneTarget& target) {
  const std::size_t n = target.vertices;
  std::vector<int> labels(logits.dim(0), 0);
  for (std::size_t i = 0; i < match.assignment.size(); ++i) {
    std::copy(target.labels[i].begin(), target.labels[i].end(), labels.begin() + static_cast<long>(match.assignment[i] * n));
  }
  return ag::cross_entropy(logits, labels);
}

Tensor loss_coord(const Tensor& queries, const MatchResult& match, const SceneTarget& target) {
  const std::size_t k = match.assignment.size(), n = target.vertices;
  if (k == 0) return Tensor::scalar(0.0);
  std::vector<double> gt;
  for (const auto& c : target.coords) gt.insert(gt.end(), c.begin(), c.end());
  // l1 averages over 2N coordinates; the per-vertex distance wants /N.
  return ag::scale(ag::l1(matched_rows(queries, match, n), Tensor::from({k, n * 2}, std::move(gt))), 2.0);
}

Tensor loss_angle(const Tensor& queries, const MatchResult& match, const SceneTarget& target) {
  const std::size_t k = match.assignment.size(), n = target.vertices;
  if (k == 0) return Tensor::scalar(0.0);
  const Tensor rows = matched_rows(queries, match, n);
  const Tensor scale = pixel_scale(n, target.width, target.height);
  Tensor total;
  for (std::size_t i = 0; i < k; ++i) {
    const Tensor pts = ag::mul(ag::reshape(ag::slice(rows, 0, i, 1), {n, 2}), scale);
    const Tensor term = angle_l1(pts, target.cosines[i]);
    total = total.defined() ? ag::add(total, term) : term;
  }
  return ag::scale(total, 1.0 / static_cast<double>(k));
}

Tensor loss_raster(const Tensor& queries, const MatchResult& match, const SceneTarget& target,
                   const RasterSettings& raster) {
  const std::size_t k = match.assignment.size(), n = target.vertices;
  if (k == 0) return Tensor::scalar(0.0);
  const Tensor rows = matched_rows(queries, match, n);
  const Tensor scale = pixel_scale(n, target.width, target.height);
  Tensor total;
  for (std::size_t i = 0; i < k; ++i) {
    const Tensor pts = ag::mul(ag::reshape(ag::slice(rows, 0, i, 1), {n, 2}), scale);
    const std::vector<Point2> gt = to_pixels(target.coords[i], target.width, target.height);
    const Tensor term = soft_raster_l1(pts, gt, raster);
    total = total.defined() ? ag::add(total, term) : term;
  }
  return ag::scale(total, 1.0 / static_cast<double>(k));
}

Tensor angle_l1(const Tensor& points, std::span<const double> gt_cosines) {
  if (points.rank() != 2 || points.dim(1) != 2 || points.dim(0) != gt_cosines.size() || points.dim(0) < 3) {
    throw Error(ErrorKind::kShape, "angle_l1 needs [N,2] points with N >= 3 matching N cosines");
  }
  const std::size_t n = points.dim(0);
  const std::vector<Point2> pts = to_pixels(points.data(), 1.0, 1.0);
  std::vector<double> gt(gt_cosines.begin(), gt_cosines.end());
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const Point2 a = pts[(j + n - 1) % n] - pts[j], b = pts[(j + 1) % n] - pts[j];
    const double la = norm(a), lb = norm(b);
    if (la < kEdgeEps || lb < kEdgeEps) continue;
    total += std::abs(dot(a, b) / (la * lb) - gt[j]);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  return ag::make_result("angle_l1", {}, {total * inv_n}, {points}, [gt, n, inv_n](ag::Node& self) {
    ag::Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    const std::vector<Point2> pts = to_pixels(in.value, 1.0, 1.0);
    const double g0 = self.grad[0] * inv_n;
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t jp = (j + n - 1) % n, jn = (j + 1) % n;
      const Point2 a = pts[jp] - pts[j], b = pts[jn] - pts[j];
      const double la = norm(a), lb = norm(b);
      if (la < kEdgeEps || lb < kEdgeEps) continue;
      const double c = dot(a, b) / (la * lb);
      const double r = c - gt[j];
      const double s = g0 * static_cast<double>((r > 0.0) - (r < 0.0));
      if (s == 0.0) continue;
      const Point2 dca = (1.0 / (la * lb)) * b - (c / (la * la)) * a;
      const Point2 dcb = (1.0 / (la * lb)) * a - (c / (lb * lb)) * b;
      g[2 * jp] += s * dca.x;
      g[2 * jp + 1] += s * dca.y;
      g[2 * jn] += s * dcb.x;
      g[2 * jn + 1] += s * dcb.y;
      g[2 * j] -= s * (dca.x + dcb.x);
      g[2 * j + 1] -= s * (dca.y + dcb.y);
    }
  });
}

Tensor soft_raster_l1(const Tensor& pred, std::span<const Point2> gt, const RasterSettings& raster) {
  if (pred.rank() != 2 || pred.dim(1) != 2 || pred.dim(0) < 3 || gt.size() < 3) {
    throw Error(ErrorKind::kShape, "soft_raster_l1 needs [N,2] prediction and >= 3 gt points");
  }
  const std::vector<Point2> poly = to_pixels(pred.data(), 1.0, 1.0);
  const RasterGrid grid = make_grid(poly, gt, raster);
  const std::size_t cells = grid.r * grid.r;
  const double tau = raster.tau;

  auto gt_pts = std::make_shared<std::vector<Point2>>(gt.begin(), gt.end());
  auto pred_s = std::make_shared<std::vector<SoftSample>>(cells);
  auto gt_s = std::make_shared<std::vector<SoftSample>>(cells);
  auto diff_sign = std::make_shared<std::vector<double>>(cells);
  double total = 0.0;
  for (std::size_t i = 0; i < cells; ++i) {
    const Point2 p = grid.sample(i);
    (*pred_s)[i] = soft_occupancy(poly, p, tau);
    (*gt_s)[i] = soft_occupancy(gt, p, tau);
    const double diff = (*pred_s)[i].occupancy - (*gt_s)[i].occupancy;
    total += std::abs(diff);
    (*diff_sign)[i] = static_cast<double>((diff > 0.0) - (diff < 0.0));
  }
  const double inv = 1.0 / static_cast<double>(cells);
  return ag::make_result("soft_raster_l1", {}, {total * inv}, {pred}, [=](ag::Node& self) {
    ag::Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    const std::vector<Point2> pts = to_pixels(in.value, 1.0, 1.0);
    const std::size_t n = pts.size();
    const double g0 = self.grad[0] * inv;
    // Gradient of the loss w.r.t. the grid origin and far corner, gathered
    // from every sample position and routed to the extreme vertices below.
    double d_min_x = 0.0, d_max_x = 0.0, d_min_y = 0.0, d_max_y = 0.0;
    for (std::size_t i = 0; i < cells; ++i) {
      const double ds = (*diff_sign)[i];
      if (ds == 0.0) continue;
      const Point2 p = grid.sample(i);
      // dO/dsoft for each polygon, with sd = sign * softmin.
      const SoftSample& sp = (*pred_s)[i];
      const SoftSample& sg = (*gt_s)[i];
      const double dsoft = g0 * ds * (-sp.occupancy * (1.0 - sp.occupancy) / tau) * sp.sign;
      const double dsoft_gt = -g0 * ds * (-sg.occupancy * (1.0 - sg.occupancy) / tau) * sg.sign;
      Point2 dp{0.0, 0.0};  // dL/d(sample position)
      for (std::size_t e = 0; e < n; ++e) {
        const Point2 a = pts[e], b = pts[(e + 1) % n];
        const Point2 ab = b - a;
        const double len2 = dot(ab, ab);
        const double t = len2 > 0.0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
        const Point2 c = a + t * ab;
        const double d = distance(p, c);
        if (d < 1e-12) continue;
        const double coeff = dsoft * std::exp(-(d - sp.min_dist) / tau) / sp.weight_sum / d;
        const Point2 dir = c - p;  // d(d)/dc = (c - p) / d
        g[2 * e] += coeff * (1.0 - t) * dir.x;
        g[2 * e + 1] += coeff * (1.0 - t) * dir.y;
        const std::size_t e1 = (e + 1) % n;
        g[2 * e1] += coeff * t * dir.x;
        g[2 * e1 + 1] += coeff * t * dir.y;
        dp = dp - coeff * dir;
      }
      const std::vector<Point2>& gp = *gt_pts;
      for (std::size_t e = 0; e < gp.size(); ++e) {
        const Point2 c = closest_on_segment(p, gp[e], gp[(e + 1) % gp.size()]);
        const double d = distance(p, c);
        if (d < 1e-12) continue;
        const double coeff = dsoft_gt * std::exp(-(d - sg.min_dist) / tau) / sg.weight_sum / d;
        dp = dp - coeff * (c - p);
      }
      const double fx = (static_cast<double>(i % grid.r) + 0.5) / static_cast<double>(grid.r);
      const double fy = (static_cast<double>(i / grid.r) + 0.5) / static_cast<double>(grid.r);
      d_min_x += dp.x * (1.0 - fx);
      d_max_x += dp.x * fx;
      d_min_y += dp.y * (1.0 - fy);
      d_max_y += dp.y * fy;
    }
    // The extent belongs to a predicted vertex only when it beats the gt.
    auto route = [&](std::size_t axis, bool lower, double grad) {
      const std::vector<Point2>& gp = *gt_pts;
      auto coord = [axis](const Point2& q) { return axis == 0 ? q.x : q.y; };
      double gt_best = coord(gp[0]);
      for (const Point2& q : gp) gt_best = lower ? std::min(gt_best, coord(q)) : std::max(gt_best, coord(q));
      std::size_t best = n;
      double best_v = gt_best;
      for (std::size_t k = 0; k < n; ++k) {
        const double v = coord(pts[k]);
        if (lower ? v < best_v : v > best_v) {
          best_v = v;
          best = k;
        }
      }
      if (best < n) g[2 * best + axis] += grad;
    };
    route(0, true, d_min_x);
    route(0, false, d_max_x);
    route(1, true, d_min_y);
    route(1, false, d_max_y);
  });
}

double hard_raster_l1(std::span<const Point2> pred, std::span<const Point2> gt, const RasterSettings& raster) {
  const RasterGrid grid = make_grid(pred, gt, raster);
  const std::size_t cells = grid.r * grid.r;
  std::size_t differ = 0;
  for (std::size_t i = 0; i < cells; ++i) {
    const Point2 p = grid.sample(i);
    differ += static_cast<std::size_t>(point_in_polygon(pred, p) != point_in_polygon(gt, p));
  }
  return static_cast<double>(differ) / static_cast<double>(cells);
}

}  // namespace polyroom
