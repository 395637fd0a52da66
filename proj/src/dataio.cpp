#include "polyroom/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "polyroom/pgm.hpp"
#include "polyroom/representation.hpp"

namespace polyroom {

namespace fs = std::filesystem;
using nlohmann::json;

DensityMap project_density(const PointCloud& pc, std::size_t w, std::size_t h) {
  if (pc.points.empty()) throw Error(ErrorKind::kContract, "empty point cloud");
  if (w == 0 || h == 0) throw Error(ErrorKind::kContract, "density size must be positive");
  double min_x = pc.points[0][0], max_x = min_x, min_y = pc.points[0][1], max_y = min_y;
  for (const auto& p : pc.points) {
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2])) {
      throw Error(ErrorKind::kContract, "non-finite point");
    }
    min_x = std::min(min_x, p[0]);
    max_x = std::max(max_x, p[0]);
    min_y = std::min(min_y, p[1]);
    max_y = std::max(max_y, p[1]);
  }
  double extent = std::max(max_x - min_x, max_y - min_y);
  if (extent == 0.0) {
    if (pc.points.size() > 1) throw Error(ErrorKind::kDegenerateExtent, "all points coincide");
    extent = 1.0;  // a lone point lands in the centre cell
  }
  const double side = extent * 1.1;
  const double cx = 0.5 * (min_x + max_x), cy = 0.5 * (min_y + max_y);
  const double x0 = cx - 0.5 * side, y0 = cy - 0.5 * side;

  DensityMap dm{Grid<float>(h, w, 0.0f)};
  for (const auto& p : pc.points) {
    const auto col = static_cast<long>(std::floor((p[0] - x0) / side * static_cast<double>(w)));
    const auto row = static_cast<long>(std::floor((p[1] - y0) / side * static_cast<double>(h)));
    if (dm.grid.in_bounds(row, col)) dm.grid(static_cast<std::size_t>(row), static_cast<std::size_t>(col)) += 1.0f;
  }
  const float peak = *std::max_element(dm.grid.cells().begin(), dm.grid.cells().end());
  for (float& v : dm.grid.cells()) v /= peak;
  return dm;
}

Grid<unsigned char> to_bytes(const Grid<float>& g) {
  Grid<unsigned char> out(g.height(), g.width());
  for (std::size_t i = 0; i < g.size(); ++i) {
    out.cells()[i] = static_cast<unsigned char>(std::lround(std::clamp(g.cells()[i], 0.0f, 1.0f) * 255.0f));
  }
  return out;
}

namespace {

Grid<float> from_bytes(const Grid<unsigned char>& g) {
  Grid<float> out(g.height(), g.width());
  for (std::size_t i = 0; i < g.size(); ++i) out.cells()[i] = static_cast<float>(g.cells()[i]) / 255.0f;
  return out;
}

Grid<unsigned char> mask_to_bytes(const Mask& m) {
  Grid<unsigned char> out(m.height(), m.width());
  for (std::size_t i = 0; i < m.size(); ++i) out.cells()[i] = m.cells()[i] ? 255 : 0;
  return out;
}

Mask mask_from_bytes(const Grid<unsigned char>& g) {
  Mask out(g.height(), g.width());
  for (std::size_t i = 0; i < g.size(); ++i) out.cells()[i] = g.cells()[i] >= 128 ? 1 : 0;
  return out;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kSchema, path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

template <typename T>
T require(const json& j, const char* key, const std::string& origin) {
  if (!j.is_object() || !j.contains(key)) throw Error(ErrorKind::kSchema, origin + ": missing \"" + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kSchema, origin + ": bad \"" + key + "\": " + e.what());
  }
}

}  // namespace

json rooms_to_json(const std::vector<Polygon>& rooms) {
  json arr = json::array();
  for (const Polygon& room : rooms) {
    json pts = json::array();
    for (const Point2& v : room) pts.push_back({v.x, v.y});
    arr.push_back(std::move(pts));
  }
  return arr;
}

std::vector<Polygon> rooms_from_json(const json& rooms, const std::string& origin) {
  if (!rooms.is_array()) throw Error(ErrorKind::kSchema, origin + ": \"rooms\" must be an array");
  std::vector<Polygon> out;
  for (const json& room : rooms) {
    if (!room.is_array()) throw Error(ErrorKind::kSchema, origin + ": room must be an array of [x, y]");
    std::vector<Point2> pts;
    for (const json& v : room) {
      if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
        throw Error(ErrorKind::kSchema, origin + ": vertex must be [x, y]");
      }
      pts.push_back({v[0].get<double>(), v[1].get<double>()});
    }
    try {
      out.emplace_back(std::move(pts));
    } catch (const Error& e) {
      throw Error(ErrorKind::kSchema, origin + ": " + e.what());
    }
  }
  return out;
}

json floorplan_to_json(const std::string& id, const Floorplan& fp) {
  return json{{"id", id}, {"width", fp.width}, {"height", fp.height}, {"rooms", rooms_to_json(fp.rooms)}};
}

Floorplan read_floorplan_json(const fs::path& path, std::string* id) {
  const json j = read_json(path);
  const std::string origin = path.string();
  Floorplan fp;
  fp.width = require<double>(j, "width", origin);
  fp.height = require<double>(j, "height", origin);
  if (!j.contains("rooms")) throw Error(ErrorKind::kSchema, origin + ": missing \"rooms\"");
  fp.rooms = rooms_from_json(j.at("rooms"), origin);
  if (id != nullptr) *id = j.contains("id") ? require<std::string>(j, "id", origin) : path.parent_path().filename().string();
  return fp;
}

void save_scene(const SceneRecord& rec, const fs::path& dir) {
  fs::create_directories(dir);
  json j = floorplan_to_json(rec.id, rec.gt);
  j["density"] = "density.pgm";
  json masks = json::array();
  for (std::size_t i = 0; i < rec.masks.masks.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "mask_%02zu.pgm", i);
    write_pgm(dir / name, mask_to_bytes(rec.masks.masks[i]));
    masks.push_back(name);
  }
  j["masks"] = masks;
  write_pgm(dir / "density.pgm", to_bytes(rec.density.grid));
  write_json(dir / "scene.json", j);
}

SceneRecord load_scene(const fs::path& dir) {
  const fs::path manifest = dir / "scene.json";
  const json j = read_json(manifest);
  const std::string origin = manifest.string();
  SceneRecord rec;
  rec.id = require<std::string>(j, "id", origin);
  rec.gt.width = require<double>(j, "width", origin);
  rec.gt.height = require<double>(j, "height", origin);
  if (!j.contains("rooms")) throw Error(ErrorKind::kSchema, origin + ": missing \"rooms\"");
  rec.gt.rooms = rooms_from_json(j.at("rooms"), origin);
  for (const Polygon& room : rec.gt.rooms) {
    for (const Point2& v : room) {
      if (v.x < 0.0 || v.y < 0.0 || v.x > rec.gt.width || v.y > rec.gt.height) {
        throw Error(ErrorKind::kSchema, origin + ": room vertex outside the image");
      }
    }
  }

  const auto density_file = require<std::string>(j, "density", origin);
  if (!fs::exists(dir / density_file)) throw Error(ErrorKind::kIo, "missing density file " + density_file);
  rec.density.grid = from_bytes(read_pgm(dir / density_file));
  if (static_cast<double>(rec.density.width()) != rec.gt.width ||
      static_cast<double>(rec.density.height()) != rec.gt.height) {
    throw Error(ErrorKind::kDimensionMismatch, origin + ": density size differs from width/height");
  }

  if (j.contains("masks")) {
    for (const auto& name : require<std::vector<std::string>>(j, "masks", origin)) {
      if (!fs::exists(dir / name)) throw Error(ErrorKind::kIo, "missing mask file " + name);
      Mask m = mask_from_bytes(read_pgm(dir / name));
      if (m.width() != rec.density.width() || m.height() != rec.density.height()) {
        throw Error(ErrorKind::kDimensionMismatch, name + " does not match the density size");
      }
      rec.masks.masks.push_back(std::move(m));
    }
  }
  return rec;
}

void write_dataset_index(const fs::path& dir, const std::vector<std::string>& ids) {
  fs::create_directories(dir);
  write_json(dir / "index.json", json{{"scenes", ids}});
}

std::vector<std::string> read_dataset_index(const fs::path& dir) {
  const fs::path path = dir / "index.json";
  if (!fs::exists(path)) throw Error(ErrorKind::kIo, "no dataset index at " + path.string());
  return require<std::vector<std::string>>(read_json(path), "scenes", path.string());
}

InstanceMasks masks_from_floorplan(const Floorplan& fp) {
  InstanceMasks out;
  for (const Polygon& room : fp.rooms) {
    out.masks.push_back(
        rasterize(room, static_cast<std::size_t>(fp.height), static_cast<std::size_t>(fp.width)));
  }
  return out;
}

namespace {

Mask morph(const Mask& m, int radius, bool dilate) {
  Mask out(m.height(), m.width(), 0);
  const long h = static_cast<long>(m.height()), w = static_cast<long>(m.width());
  for (long r = 0; r < h; ++r) {
    for (long c = 0; c < w; ++c) {
      bool any = false, all = true;
      for (long dr = -radius; dr <= radius; ++dr) {
        for (long dc = -radius; dc <= radius; ++dc) {
          const bool v = m.at_or(r + dr, c + dc) != 0;
          any = any || v;
          all = all && v;
        }
      }
      out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = (dilate ? any : all) ? 1 : 0;
    }
  }
  return out;
}

bool mask_empty(const Mask& m) {
  return std::none_of(m.cells().begin(), m.cells().end(), [](unsigned char v) { return v != 0; });
}

// Rectangle, or L-shape with one corner notched out; clockwise under y-down.
Polygon make_room(std::mt19937_64& rng, double x0, double y0, double w, double h, bool l_shape,
                  double min_side) {
  const std::vector<Point2> box{{x0, y0}, {x0 + w, y0}, {x0 + w, y0 + h}, {x0, y0 + h}};
  if (!l_shape) return Polygon(box);
  std::uniform_int_distribution<int> pick_corner(0, 3);
  const int corner = pick_corner(rng);
  const Point2 c = box[static_cast<std::size_t>(corner)];
  const Point2 prev = box[static_cast<std::size_t>((corner + 3) % 4)];
  const Point2 next = box[static_cast<std::size_t>((corner + 1) % 4)];
  const double len_in = distance(prev, c), len_out = distance(c, next);
  const Point2 u_in = (1.0 / len_in) * (c - prev), u_out = (1.0 / len_out) * (next - c);
  std::uniform_int_distribution<int> cut_in(static_cast<int>(min_side), static_cast<int>(len_in - min_side));
  std::uniform_int_distribution<int> cut_out(static_cast<int>(min_side), static_cast<int>(len_out - min_side));
  const double a = cut_in(rng), b = cut_out(rng);
  std::vector<Point2> pts;
  for (int k = 0; k < 4; ++k) {
    if (k == corner) {
      pts.push_back(c - a * u_in);
      pts.push_back(c - a * u_in + b * u_out);
      pts.push_back(c + b * u_out);
    } else {
      pts.push_back(box[static_cast<std::size_t>(k)]);
    }
  }
  return Polygon(std::move(pts));
}

}  // namespace

SceneRecord generate_scene(std::uint64_t seed, const SynthConfig& cfg) {
  if (cfg.rooms_min < 1 || cfg.rooms_min > cfg.rooms_max) throw Error(ErrorKind::kConfig, "need 1 <= rooms_min <= rooms_max");
  if (cfg.rooms_max > cfg.max_rooms) throw Error(ErrorKind::kConfig, "rooms_max exceeds the model capacity M");
  const double side_cap = cfg.max_side_fraction * static_cast<double>(std::min(cfg.width, cfg.height));
  if (side_cap < cfg.min_side || cfg.min_side < 1.0) throw Error(ErrorKind::kConfig, "image too small for min_side");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_count(cfg.rooms_min, cfg.rooms_max);
  const std::size_t target = pick_count(rng);
  std::uniform_int_distribution<int> pick_side(static_cast<int>(cfg.min_side), static_cast<int>(side_cap));
  std::bernoulli_distribution pick_l(cfg.l_shape_probability);

  const std::size_t H = cfg.height, W = cfg.width;
  Mask occupied(H, W, 0);  // existing rooms grown by the wall gap
  const int gap = static_cast<int>(std::ceil(cfg.wall_gap));

  SceneRecord rec;
  char id[32];
  std::snprintf(id, sizeof(id), "synth_%016llx", static_cast<unsigned long long>(seed));
  rec.id = id;
  rec.gt.width = static_cast<double>(W);
  rec.gt.height = static_cast<double>(H);

  while (rec.gt.rooms.size() < target) {
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_retries && !placed; ++attempt) {
      const double w = pick_side(rng), h = pick_side(rng);
      const bool l_shape = pick_l(rng) && w >= 2.0 * cfg.min_side && h >= 2.0 * cfg.min_side;
      const double free_x = static_cast<double>(W) - 2.0 * cfg.margin - w;
      const double free_y = static_cast<double>(H) - 2.0 * cfg.margin - h;
      if (free_x < 0.0 || free_y < 0.0) continue;
      std::uniform_int_distribution<int> px(0, static_cast<int>(free_x)), py(0, static_cast<int>(free_y));
      const double x0 = cfg.margin + px(rng), y0 = cfg.margin + py(rng);
      Polygon room = normalize_start(ensure_clockwise(make_room(rng, x0, y0, w, h, l_shape, cfg.min_side)));
      Mask m = rasterize(room, H, W);
      bool clash = false;
      for (std::size_t i = 0; i < m.size() && !clash; ++i) clash = m.cells()[i] && occupied.cells()[i];
      if (clash) continue;
      const Mask grown = morph(m, gap, true);
      for (std::size_t i = 0; i < m.size(); ++i) occupied.cells()[i] |= grown.cells()[i];
      rec.gt.rooms.push_back(std::move(room));
      rec.masks.masks.push_back(std::move(m));
      placed = true;
    }
    if (!placed) {
      if (rec.gt.rooms.size() >= cfg.rooms_min) break;
      throw Error(ErrorKind::kGeneration, "could not place room after " + std::to_string(cfg.max_retries) + " tries");
    }
  }

  // Point samples: jittered wall points plus sparse interior returns.
  Grid<float> counts(H, W, 0.0f);
  std::normal_distribution<double> jitter(0.0, cfg.jitter_sigma);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto deposit = [&](Point2 p) {
    const auto c = static_cast<long>(std::floor(p.x)), r = static_cast<long>(std::floor(p.y));
    if (counts.in_bounds(r, c)) counts(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) += 1.0f;
  };
  for (const Polygon& room : rec.gt.rooms) {
    for (std::size_t i = 0; i < room.size(); ++i) {
      const Point2 a = room[i], b = room[(i + 1) % room.size()];
      const auto count = static_cast<std::size_t>(std::ceil(distance(a, b) * cfg.wall_points_per_px));
      for (std::size_t k = 0; k < count; ++k) {
        const Point2 p = a + unit(rng) * (b - a);
        deposit({p.x + jitter(rng), p.y + jitter(rng)});
      }
    }
    const BoundingBox box = bounding_box(room);
    const auto interior = static_cast<std::size_t>(std::abs(signed_area(room)) * cfg.interior_density);
    for (std::size_t k = 0; k < interior;) {
      const Point2 p{box.min_x + unit(rng) * (box.max_x - box.min_x), box.min_y + unit(rng) * (box.max_y - box.min_y)};
      if (point_in_polygon(room.vertices(), p)) {
        deposit(p);
        ++k;
      }
    }
  }
  float peak = *std::max_element(counts.cells().begin(), counts.cells().end());
  if (peak <= 0.0f) peak = 1.0f;
  for (float& v : counts.cells()) v = std::round(v / peak * 255.0f) / 255.0f;
  rec.density.grid = std::move(counts);

  if (cfg.degrade_masks) rec.masks = degrade_masks(rec.masks, seed ^ 0x9e3779b97f4a7c15ULL, cfg);
  return rec;
}

InstanceMasks degrade_masks(const InstanceMasks& clean, std::uint64_t seed, const SynthConfig& cfg) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution drop(cfg.p_drop);
  std::bernoulli_distribution grow(0.5);
  std::uniform_int_distribution<int> radius(cfg.morph_min, cfg.morph_max);
  InstanceMasks out;
  for (const Mask& m : clean.masks) {
    const bool dropped = drop(rng);
    const bool dilate = grow(rng);
    const int r = radius(rng);
    if (dropped) continue;
    Mask changed = r > 0 ? morph(m, r, dilate) : m;
    out.masks.push_back(mask_empty(changed) ? m : std::move(changed));
  }
  return out;
}

}  // namespace polyroom
