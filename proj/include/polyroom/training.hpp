#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "polyroom/losses.hpp"
#include "polyroom/model.hpp"

namespace polyroom {

struct LossBreakdown {
  ag::Tensor total;
  double cls = 0.0, coord = 0.0, ras = 0.0, ang = 0.0;  // weighted, summed over layers
  MatchResult match;
};

/// Matching once on the final queries, then coord / raster / angle terms on
/// every refined snapshot Q_1..Q_L under that matching, plus the label loss
/// on the final logits.
LossBreakdown total_loss(const DecoderOutput& out, const SceneTarget& target, const LossWeights& weights,
                         const RasterSettings& raster, std::size_t m);

enum class QueryInit { kMasks, kRandom };

struct TrainConfig {
  double lr = 2e-4;
  std::size_t epochs = 1;
  std::size_t batch_size = 1;
  std::size_t max_steps = 0;  // 0: run all epochs
  std::uint64_t seed = 0;
  double grad_clip = 0.1;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  LossWeights weights;
  RasterSettings raster;
  QueryInit init = QueryInit::kMasks;
};

struct TrainingSample {
  std::string id;
  DensityMap density;
  SceneTarget target;
  InstanceMasks masks;
};

TrainingSample make_sample(const SceneRecord& rec, std::size_t n);

// Queries for a sample; padded (or, for kRandom, all) rows drawn from seed.
RoomQueries initial_queries(const TrainingSample& sample, const ModelConfig& cfg, QueryInit init, std::uint64_t seed);

struct AdamState {
  std::size_t step = 0;
  std::map<std::string, std::vector<double>> m, v;
};

class Adam {
 public:
  Adam(ParamStore& params, const TrainConfig& cfg) : params_(params), cfg_(cfg) {}
  // Clips the global gradient norm, applies one update, returns the pre-clip norm.
  double step();
  AdamState& state() { return state_; }
  const AdamState& state() const { return state_; }

 private:
  ParamStore& params_;
  TrainConfig cfg_;
  AdamState state_;
};

struct StepLog {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double loss = 0.0, cls = 0.0, coord = 0.0, ras = 0.0, ang = 0.0, grad_norm = 0.0;
  nlohmann::json to_json() const;
};

class Trainer {
 public:
  Trainer(PolyRoomModel& model, TrainConfig cfg);

  // Runs from epoch() to cfg.epochs, stopping once step() reaches max_steps.
  // on_epoch fires after each completed epoch with the new epoch count.
  void fit(const std::vector<TrainingSample>& data, const std::function<void(const StepLog&)>& on_step = {},
           const std::function<void(std::size_t)>& on_epoch = {});
  // Loss and gradient for a single sample without updating parameters.
  LossBreakdown evaluate_loss(const TrainingSample& sample, std::uint64_t query_seed) const;

  Adam& optimizer() { return adam_; }
  std::size_t step() const { return adam_.state().step; }
  std::size_t epoch() const { return epoch_; }
  void set_epoch(std::size_t e) { epoch_ = e; }

 private:
  PolyRoomModel& model_;
  TrainConfig cfg_;
  Adam adam_;
  std::size_t epoch_ = 0;
};

// model.json (manifest) + model.bin (little-endian f64 blob).
struct Checkpoint {
  ModelConfig config;
  std::size_t step = 0;
  std::size_t epoch = 0;
  nlohmann::json extra;
};

void save_checkpoint(const std::filesystem::path& dir, const PolyRoomModel& model, const AdamState* adam,
                     std::size_t epoch, const nlohmann::json& extra = {});
// Loads parameters into a fresh model; fills adam when present in the file.
PolyRoomModel load_checkpoint(const std::filesystem::path& dir, AdamState* adam = nullptr, Checkpoint* info = nullptr);

}  // namespace polyroom
