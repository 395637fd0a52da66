#include "polyroom/extraction.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "polyroom/representation.hpp"

namespace polyroom {

namespace {

constexpr double kEdgeEps = 1e-8;

std::string base64(const std::vector<unsigned char>& bytes) {
  static const char* table = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    const unsigned v = (bytes[i] << 16) | ((i + 1 < bytes.size() ? bytes[i + 1] : 0) << 8) |
                       (i + 2 < bytes.size() ? bytes[i + 2] : 0);
    out += table[(v >> 18) & 63];
    out += table[(v >> 12) & 63];
    out += i + 1 < bytes.size() ? table[(v >> 6) & 63] : '=';
    out += i + 2 < bytes.size() ? table[v & 63] : '=';
  }
  return out;
}

void put_le(std::vector<unsigned char>& b, std::uint32_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) b.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

// 24-bit grey BMP, bottom-up rows padded to 4 bytes.
std::vector<unsigned char> density_bmp(const DensityMap& dm) {
  const std::size_t w = dm.width(), h = dm.height();
  const std::size_t stride = (w * 3 + 3) / 4 * 4;
  std::vector<unsigned char> b;
  b.push_back('B');
  b.push_back('M');
  put_le(b, static_cast<std::uint32_t>(54 + stride * h), 4);
  put_le(b, 0, 4);
  put_le(b, 54, 4);
  put_le(b, 40, 4);
  put_le(b, static_cast<std::uint32_t>(w), 4);
  put_le(b, static_cast<std::uint32_t>(h), 4);
  put_le(b, 1, 2);
  put_le(b, 24, 2);
  for (int i = 0; i < 6; ++i) put_le(b, 0, 4);
  for (std::size_t r = h; r-- > 0;) {
    std::size_t written = 0;
    for (std::size_t c = 0; c < w; ++c) {
      const double v = std::clamp(static_cast<double>(dm.grid(r, c)), 0.0, 1.0);
      const auto g = static_cast<unsigned char>(255 - std::lround(v * 255.0));
      b.insert(b.end(), {g, g, g});
      written += 3;
    }
    for (; written < stride; ++written) b.push_back(0);
  }
  return b;
}

}  // namespace

void ExtractionConfig::validate() const {
  if (!(t_pro >= 0.0 && t_pro <= 1.0)) throw Error(ErrorKind::kConfig, "t_pro must lie in [0, 1]");
  if (!(t_ang >= 0.0 && t_ang <= 1.0)) throw Error(ErrorKind::kConfig, "t_ang must lie in [0, 1]");
  if (!(dp_eps >= 0.0)) throw Error(ErrorKind::kConfig, "dp_eps must be non-negative");
}

std::vector<std::size_t> select_vertices(std::span<const double> probs, std::span<const Point2> coords,
                                         const ExtractionConfig& cfg) {
  if (probs.size() != coords.size()) throw Error(ErrorKind::kShape, "probabilities and coordinates differ in length");
  const std::size_t n = coords.size();
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < n; ++j) {
    bool keep = probs[j] > cfg.t_pro;
    if (!keep && n >= 3) {
      const Point2 a = coords[(j + n - 1) % n] - coords[j], b = coords[(j + 1) % n] - coords[j];
      const double la = norm(a), lb = norm(b);
      if (la >= kEdgeEps && lb >= kEdgeEps) keep = std::abs(dot(a, b) / (la * lb)) < cfg.t_ang;
    }
    if (keep) out.push_back(j);
  }
  return out;
}

Polygon extract_room(std::span<const double> probs, std::span<const Point2> coords, const ExtractionConfig& cfg,
                     double dp_eps_px, std::vector<double>* kept_probs) {
  std::vector<std::size_t> idx = select_vertices(probs, coords, cfg);
  if (idx.size() < 3) {
    idx.resize(coords.size());
    for (std::size_t j = 0; j < idx.size(); ++j) idx[j] = j;
  }
  std::vector<Point2> pts;
  for (std::size_t j : idx) pts.push_back(coords[j]);
  Polygon poly(std::move(pts));
  poly = normalize_start(ensure_clockwise(dp_simplify(poly, dp_eps_px)));
  if (kept_probs != nullptr) {
    // Map surviving vertices back to their source index for the diagnostics.
    kept_probs->clear();
    for (const Point2& v : poly) {
      for (std::size_t j : idx) {
        if (coords[j] == v) {
          kept_probs->push_back(probs[j]);
          break;
        }
      }
    }
  }
  return poly;
}

std::vector<double> corner_probabilities(const ag::Tensor& logits) {
  if (logits.rank() != 2 || logits.dim(1) != 2) throw Error(ErrorKind::kShape, "logits must be [R, 2]");
  const auto v = logits.data();
  std::vector<double> p(logits.dim(0));
  for (std::size_t r = 0; r < p.size(); ++r) p[r] = 1.0 / (1.0 + std::exp(v[2 * r] - v[2 * r + 1]));
  return p;
}

VectorFloorplan extract_floorplan(const DecoderOutput& out, const RoomQueries& q_meta, const ExtractionConfig& cfg,
                                  double width, double height) {
  cfg.validate();
  VectorFloorplan fp;
  fp.width = width;
  fp.height = height;
  const std::size_t n = q_meta.vertices;
  const auto q = out.queries.back().data();
  if (q.size() != q_meta.rooms * n * 2) throw Error(ErrorKind::kShape, "decoder output does not match query layout");
  const std::vector<double> probs = corner_probabilities(out.logits);
  const double eps = cfg.dp_eps * width / 256.0;
  for (std::size_t r = 0; r < q_meta.valid_count; ++r) {
    std::vector<Point2> coords(n);
    for (std::size_t j = 0; j < n; ++j) coords[j] = {q[(r * n + j) * 2] * width, q[(r * n + j) * 2 + 1] * height};
    const std::span<const double> pr(probs.data() + r * n, n);
    try {
      std::vector<double> kept;
      Polygon poly = extract_room(pr, coords, cfg, eps, &kept);
      if (!is_simple(poly)) ++fp.non_simple;
      fp.rooms.push_back(std::move(poly));
      fp.source_index.push_back(r);
      fp.corner_probability.push_back(std::move(kept));
    } catch (const Error& e) {
      fp.dropped.push_back({r, e.what()});
    }
  }
  return fp;
}

std::string to_svg(const VectorFloorplan& fp, const DensityMap* underlay) {
  std::ostringstream s;
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" xmlns:xlink=\"http://www.w3.org/1999/xlink\" version=\"1.1\" width=\""
    << fp.width << "\" height=\"" << fp.height << "\" viewBox=\"0 0 " << fp.width << ' ' << fp.height << "\">\n";
  if (underlay != nullptr && underlay->width() > 0) {
    s << "  <image x=\"0\" y=\"0\" width=\"" << fp.width << "\" height=\"" << fp.height
      << "\" preserveAspectRatio=\"none\" xlink:href=\"data:image/bmp;base64," << base64(density_bmp(*underlay))
      << "\"/>\n";
  }
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  for (std::size_t i = 0; i < fp.rooms.size(); ++i) {
    s << "  <path d=\"";
    for (std::size_t j = 0; j < fp.rooms[i].size(); ++j) {
      s << (j == 0 ? "M " : " L ") << fp.rooms[i][j].x << ' ' << fp.rooms[i][j].y;
    }
    const char* colour = palette[i % 10];
    s << " Z\" fill=\"" << colour << "\" fill-opacity=\"0.25\" stroke=\"" << colour << "\" stroke-width=\"1\"/>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void export_svg(const VectorFloorplan& fp, const std::filesystem::path& path, const DensityMap* underlay) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << to_svg(fp, underlay);
}

void export_json(const VectorFloorplan& fp, const std::string& id, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << floorplan_to_json(id, fp.to_floorplan()).dump(2) << '\n';
}

}  // namespace polyroom
