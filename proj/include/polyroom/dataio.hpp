#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "polyroom/geometry.hpp"
#include "polyroom/grid.hpp"

namespace polyroom {

struct PointCloud {
  std::vector<std::array<double, 3>> points;  // metres
};

// Top-view density, max-normalised to 1.
struct DensityMap {
  Grid<float> grid;

  std::size_t width() const { return grid.width(); }
  std::size_t height() const { return grid.height(); }
  bool operator==(const DensityMap&) const = default;
};

struct InstanceMasks {
  std::vector<Mask> masks;
  bool operator==(const InstanceMasks&) const = default;
};

struct SceneRecord {
  std::string id;
  DensityMap density;
  Floorplan gt;
  InstanceMasks masks;

  bool operator==(const SceneRecord&) const = default;
};

// Projects along z onto a w x h grid covering the x-y extent plus a 5%
// margin. Both axes share one scale so pixels stay square.
DensityMap project_density(const PointCloud& pc, std::size_t w, std::size_t h);

// Scene directory layout: scene.json + density.pgm + mask_XX.pgm.
void save_scene(const SceneRecord& rec, const std::filesystem::path& dir);
SceneRecord load_scene(const std::filesystem::path& dir);

// Rooms array in the scene.json layout: [[[x, y], ...], ...].
nlohmann::json rooms_to_json(const std::vector<Polygon>& rooms);
std::vector<Polygon> rooms_from_json(const nlohmann::json& rooms, const std::string& origin);

// Any file carrying "width", "height" and "rooms" in the scene.json layout.
Floorplan read_floorplan_json(const std::filesystem::path& path, std::string* id = nullptr);
nlohmann::json floorplan_to_json(const std::string& id, const Floorplan& fp);

// A dataset directory holds index.json {"scenes": [id, ...]} and one
// sub-directory per scene id.
void write_dataset_index(const std::filesystem::path& dir, const std::vector<std::string>& ids);
std::vector<std::string> read_dataset_index(const std::filesystem::path& dir);

struct SynthConfig {
  std::size_t width = 256;
  std::size_t height = 256;
  std::size_t rooms_min = 1;
  std::size_t rooms_max = 4;
  std::size_t max_rooms = 20;  // model capacity M
  double min_side = 12.0;
  double max_side_fraction = 0.45;
  double l_shape_probability = 0.4;
  double wall_gap = 2.0;
  double margin = 4.0;
  double wall_points_per_px = 4.0;
  double interior_density = 0.03;
  double jitter_sigma = 0.5;
  int max_retries = 200;
  bool degrade_masks = false;
  double p_drop = 0.05;
  int morph_min = 1;
  int morph_max = 3;
};

SceneRecord generate_scene(std::uint64_t seed, const SynthConfig& cfg);

// Degraded copy of clean masks: each dropped with p_drop, otherwise eroded
// or dilated by a random radius in [morph_min, morph_max].
InstanceMasks degrade_masks(const InstanceMasks& clean, std::uint64_t seed, const SynthConfig& cfg);

// One mask per room from the polygon interiors.
InstanceMasks masks_from_floorplan(const Floorplan& fp);

// Quantises to the 8-bit levels used on disk.
Grid<unsigned char> to_bytes(const Grid<float>& g);

}  // namespace polyroom
