#include "polyroom/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace polyroom {

using ag::Tensor;

namespace {

Tensor weighted(const Tensor& t, double w, double& component) {
  const Tensor out = ag::scale(t, w);
  component += out.item();
  return out;
}

Tensor accumulate(const Tensor& total, const Tensor& term) { return total.defined() ? ag::add(total, term) : term; }

std::uint64_t sample_seed(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index)};
  std::uint64_t out[1];
  seq.generate(reinterpret_cast<std::uint32_t*>(out), reinterpret_cast<std::uint32_t*>(out) + 2);
  return out[0];
}

}  // namespace

LossBreakdown total_loss(const DecoderOutput& out, const SceneTarget& target, const LossWeights& weights,
                         const RasterSettings& raster, std::size_t m) {
  if (out.queries.size() < 2) throw Error(ErrorKind::kShape, "decoder output needs at least one refined layer");
  LossBreakdown lb;
  lb.match = match_rooms(out.queries.back().data(), m, target);
  Tensor total = weighted(loss_cls(out.logits, lb.match, target), weights.cls, lb.cls);
  for (std::size_t i = 1; i < out.queries.size(); ++i) {
    const Tensor& q = out.queries[i];
    total = accumulate(total, weighted(loss_coord(q, lb.match, target), weights.coord, lb.coord));
    if (weights.ras != 0.0) total = accumulate(total, weighted(loss_raster(q, lb.match, target, raster), weights.ras, lb.ras));
    if (weights.ang != 0.0) total = accumulate(total, weighted(loss_angle(q, lb.match, target), weights.ang, lb.ang));
  }
  lb.total = total;
  return lb;
}

TrainingSample make_sample(const SceneRecord& rec, std::size_t n) {
  return {rec.id, rec.density, make_target(encode_floorplan(rec.gt, n)), rec.masks};
}

RoomQueries initial_queries(const TrainingSample& sample, const ModelConfig& cfg, QueryInit init, std::uint64_t seed) {
  if (init == QueryInit::kRandom) {
    if (sample.masks.masks.size() > cfg.max_rooms) throw Error(ErrorKind::kCapacity, "more masks than query rooms");
    return init_queries_random(sample.masks.masks.size(), cfg.max_rooms, cfg.vertices, seed);
  }
  return init_queries(sample.masks, cfg.max_rooms, cfg.vertices, seed);
}

double Adam::step() {
  double sq = 0.0;
  for (auto& [name, t] : params_.all()) {
    if (!t.has_grad()) continue;
    for (double g : t.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw Error(ErrorKind::kNumeric, "non-finite gradient norm");
  const double clip = (cfg_.grad_clip > 0.0 && norm > cfg_.grad_clip) ? cfg_.grad_clip / norm : 1.0;

  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t), c2 = 1.0 - std::pow(cfg_.beta2, t);
  for (auto& [name, p] : params_.all()) {
    auto& m = state_.m[name];
    auto& v = state_.v[name];
    if (m.empty()) {
      m.assign(p.numel(), 0.0);
      v.assign(p.numel(), 0.0);
    }
    const bool has = p.has_grad();
    std::span<double> w = p.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = has ? p.node()->grad[i] * clip : 0.0;
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      w[i] -= cfg_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.adam_eps);
    }
  }
  return norm;
}

nlohmann::json StepLog::to_json() const {
  return {{"step", step}, {"epoch", epoch}, {"loss", loss}, {"cls", cls},
          {"coord", coord}, {"ras", ras}, {"ang", ang}, {"grad_norm", grad_norm}};
}

Trainer::Trainer(PolyRoomModel& model, TrainConfig cfg) : model_(model), cfg_(cfg), adam_(model.params(), cfg) {
  if (!(cfg_.lr > 0.0)) throw Error(ErrorKind::kConfig, "lr must be positive");
  if (cfg_.batch_size == 0) throw Error(ErrorKind::kConfig, "batch size must be positive");
}

LossBreakdown Trainer::evaluate_loss(const TrainingSample& sample, std::uint64_t query_seed) const {
  const RoomQueries q0 = initial_queries(sample, model_.config(), cfg_.init, query_seed);
  const DecoderOutput out = model_.forward(sample.density, q0);
  return total_loss(out, sample.target, cfg_.weights, cfg_.raster, model_.config().max_rooms);
}

void Trainer::fit(const std::vector<TrainingSample>& data, const std::function<void(const StepLog&)>& on_step,
                  const std::function<void(std::size_t)>& on_epoch) {
  if (data.empty()) throw Error(ErrorKind::kContract, "empty training set");
  std::vector<std::size_t> order(data.size());
  for (; epoch_ < cfg_.epochs; ++epoch_) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(sample_seed(cfg_.seed, epoch_));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
      if (cfg_.max_steps != 0 && step() >= cfg_.max_steps) return;
      const std::size_t end = std::min(order.size(), start + cfg_.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      model_.params().zero_grad();
      StepLog log;
      log.epoch = epoch_;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        LossBreakdown lb = evaluate_loss(data[idx], sample_seed(cfg_.seed ^ 0x9e3779b97f4a7c15ULL, idx));
        const double value = lb.total.item();
        if (!std::isfinite(value)) {
          std::ostringstream msg;
          msg << "loss became " << value << " at step " << step() + 1 << " on scene " << data[idx].id << " (cls "
              << lb.cls << ", coord " << lb.coord << ", ras " << lb.ras << ", ang " << lb.ang << ")";
          throw Error(ErrorKind::kNumeric, msg.str());
        }
        ag::scale(lb.total, inv).backward();
        log.loss += value * inv;
        log.cls += lb.cls * inv;
        log.coord += lb.coord * inv;
        log.ras += lb.ras * inv;
        log.ang += lb.ang * inv;
      }
      log.grad_norm = adam_.step();
      log.step = step();
      if (on_step) on_step(log);
    }
    if (on_epoch) on_epoch(epoch_ + 1);
  }
}

}  // namespace polyroom
