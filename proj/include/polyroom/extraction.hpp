#pragma once

#include <cstddef>
#include <filesystem>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "polyroom/dataio.hpp"
#include "polyroom/geometry.hpp"
#include "polyroom/model.hpp"

namespace polyroom {

struct ExtractionConfig {
  double t_pro = 0.01;
  double t_ang = std::numbers::sqrt3 / 2.0;
  double dp_eps = 4.0;  // pixels on a 256-wide image; scaled with the width

  void validate() const;
};

struct RoomDrop {
  std::size_t source = 0;  // query row
  std::string reason;
};

struct VectorFloorplan {
  std::vector<Polygon> rooms;
  std::vector<std::size_t> source_index;                // query row per room
  std::vector<std::vector<double>> corner_probability;  // per kept vertex
  std::vector<RoomDrop> dropped;
  std::size_t non_simple = 0;
  double width = 0.0, height = 0.0;

  Floorplan to_floorplan() const { return {rooms, width, height}; }
};

// Indices j (ascending) with probs[j] > t_pro or |cos_j| < t_ang. A vertex
// touching a zero-length edge has no angle and is selected by probability only.
std::vector<std::size_t> select_vertices(std::span<const double> probs, std::span<const Point2> coords,
                                         const ExtractionConfig& cfg);

// Fewer than three selected vertices fall back to the whole sequence.
// Throws kDegenerateResult when nothing usable is left.
Polygon extract_room(std::span<const double> probs, std::span<const Point2> coords, const ExtractionConfig& cfg,
                     double dp_eps_px, std::vector<double>* kept_probs = nullptr);

// Rooms 0..valid_count-1 of the final snapshot, in pixels of a width x height image.
VectorFloorplan extract_floorplan(const DecoderOutput& out, const RoomQueries& q_meta, const ExtractionConfig& cfg,
                                  double width, double height);

// Softmax corner probability per row of [R, 2] logits.
std::vector<double> corner_probabilities(const ag::Tensor& logits);

std::string to_svg(const VectorFloorplan& fp, const DensityMap* underlay = nullptr);
void export_svg(const VectorFloorplan& fp, const std::filesystem::path& path, const DensityMap* underlay = nullptr);
void export_json(const VectorFloorplan& fp, const std::string& id, const std::filesystem::path& path);

}  // namespace polyroom
