#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <random>
#include <thread>

#include <CLI11.hpp>

#include "polyroom/evaluation.hpp"
#include "polyroom/extraction.hpp"
#include "polyroom/training.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace polyroom;
using cli::OptionSpec;
using cli::RunConfig;

namespace {

constexpr int kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kContract: return kExitUsage;
    case ErrorKind::kNumeric: return kExitNumeric;
    default: return kExitData;
  }
}

std::size_t thread_budget() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("POLYROOM_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) throw Error(ErrorKind::kConfig, "POLYROOM_THREADS must be a positive integer");
    n = std::min(n, static_cast<std::size_t>(v));
  }
  return n;
}

// Scene-parallel loop; the first exception is rethrown after all workers join.
template <typename F>
void parallel_for(std::size_t count, F&& body) {
  const std::size_t workers = std::min(thread_budget(), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex guard;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < count;) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(guard);
          if (!failure) failure = std::current_exception();
          next = count;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::uint64_t scene_seed(std::uint64_t seed, std::size_t k) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(k)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::vector<SceneRecord> load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::kIo, "no data directory " + dir.string());
  std::vector<SceneRecord> out;
  if (fs::exists(dir / "scene.json")) {
    out.push_back(load_scene(dir));
    return out;
  }
  for (const std::string& id : read_dataset_index(dir)) out.push_back(load_scene(dir / id));
  return out;
}

// Floorplans by id, from a dataset directory or a directory of <id>.json files.
std::map<std::string, Floorplan> load_floorplans(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::kIo, "no directory " + dir.string());
  std::map<std::string, Floorplan> out;
  if (fs::exists(dir / "index.json")) {
    for (const std::string& id : read_dataset_index(dir)) out[id] = read_floorplan_json(dir / id / "scene.json");
    return out;
  }
  if (fs::exists(dir / "scene.json")) {
    std::string id;
    Floorplan fp = read_floorplan_json(dir / "scene.json", &id);
    out[id] = std::move(fp);
    return out;
  }
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    std::ifstream in(entry.path());
    const json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("rooms")) continue;
    out[entry.path().stem().string()] = read_floorplan_json(entry.path());
  }
  return out;
}

// ---- synth ----

std::vector<OptionSpec> synth_specs() {
  return {{"out", nullptr, "output dataset directory"},
          {"scenes", 10u, "number of scenes"},
          {"seed", 0u, "base seed"},
          {"width", 256u, "image width"},
          {"height", 256u, "image height"},
          {"rooms_min", 1u, "fewest rooms per scene"},
          {"rooms_max", 4u, "most rooms per scene"},
          {"max_rooms", 20u, "model capacity M the data must fit"},
          {"degrade_masks", false, "store degraded instance masks"},
          {"p_drop", 0.05, "mask drop probability when degrading"},
          {"morph_min", 1u, "smallest erosion/dilation radius"},
          {"morph_max", 3u, "largest erosion/dilation radius"}};
}

int run_synth(const RunConfig& rc) {
  SynthConfig sc;
  sc.width = rc.count("width");
  sc.height = rc.count("height");
  sc.rooms_min = rc.count("rooms_min");
  sc.rooms_max = rc.count("rooms_max");
  sc.max_rooms = rc.count("max_rooms");
  sc.degrade_masks = rc.flag("degrade_masks");
  sc.p_drop = rc.num("p_drop");
  sc.morph_min = static_cast<int>(rc.count("morph_min"));
  sc.morph_max = static_cast<int>(rc.count("morph_max"));
  if (sc.rooms_max > sc.max_rooms) throw Error(ErrorKind::kConfig, "rooms_max exceeds max_rooms");
  const fs::path out = rc.str("out");
  const std::size_t k = rc.count("scenes");
  const std::uint64_t seed = rc.seed("seed");
  std::vector<std::string> ids(k);
  parallel_for(k, [&](std::size_t i) {
    const SceneRecord rec = generate_scene(scene_seed(seed, i), sc);
    save_scene(rec, out / rec.id);
    ids[i] = rec.id;
  });
  write_dataset_index(out, ids);
  rc.echo(out);
  std::cout << "wrote " << k << " scenes to " << out.string() << '\n';
  return kExitOk;
}

// ---- train ----

std::vector<OptionSpec> train_specs() {
  const ModelConfig mc;
  const TrainConfig tc;
  return {{"data", nullptr, "training dataset directory"},
          {"out", nullptr, "run directory (checkpoint, log, config)"},
          {"epochs", 1u, "epochs"},
          {"lr", tc.lr, "Adam learning rate"},
          {"batch_size", 1u, "scenes per step"},
          {"max_steps", 0u, "stop after this many steps in total (0: no cap)"},
          {"seed", 0u, "seed for weights, batching and padded queries"},
          {"grad_clip", tc.grad_clip, "global gradient-norm clip"},
          {"max_rooms", mc.max_rooms, "query rooms M"},
          {"vertices", mc.vertices, "vertices per room N"},
          {"d", mc.d, "model width"},
          {"layers", mc.layers, "decoder layers"},
          {"heads", mc.heads, "attention heads"},
          {"points", mc.points, "cross-attention samples per head"},
          {"encoder_layers", mc.encoder_layers, "encoder self-attention layers"},
          {"feature_stride", mc.feature_stride, "feature map stride"},
          {"ffn_dim", mc.ffn_dim, "feed-forward width"},
          {"room_aware", mc.room_aware, "factorised room-aware self-attention"},
          {"detach_refs", mc.detach_refs, "stop gradients through queries between layers"},
          {"corner_prior", mc.corner_prior, "initial corner probability"},
          {"raster_resolution", tc.raster.resolution, "raster loss grid size"},
          {"tau", tc.raster.tau, "raster loss temperature (pixels)"},
          {"w_cls", tc.weights.cls, "label loss weight"},
          {"w_coord", tc.weights.coord, "coordinate loss weight"},
          {"w_ras", tc.weights.ras, "raster loss weight"},
          {"w_ang", tc.weights.ang, "angle loss weight"},
          {"init", "masks", "query initialisation: masks or random"},
          {"resume", false, "continue from the checkpoint in --out"}};
}

QueryInit parse_init(const std::string& s) {
  if (s == "masks") return QueryInit::kMasks;
  if (s == "random") return QueryInit::kRandom;
  throw Error(ErrorKind::kConfig, "init must be 'masks' or 'random'");
}

int run_train(const RunConfig& rc) {
  const fs::path out = rc.str("out");
  ModelConfig mc;
  mc.max_rooms = rc.count("max_rooms");
  mc.vertices = rc.count("vertices");
  mc.d = rc.count("d");
  mc.layers = rc.count("layers");
  mc.heads = rc.count("heads");
  mc.points = rc.count("points");
  mc.encoder_layers = rc.count("encoder_layers");
  mc.feature_stride = rc.count("feature_stride");
  mc.ffn_dim = rc.count("ffn_dim");
  mc.room_aware = rc.flag("room_aware");
  mc.detach_refs = rc.flag("detach_refs");
  mc.corner_prior = rc.num("corner_prior");
  mc.validate();

  TrainConfig tc;
  tc.epochs = rc.count("epochs");
  tc.lr = rc.num("lr");
  tc.batch_size = rc.count("batch_size");
  tc.max_steps = rc.count("max_steps");
  tc.seed = rc.seed("seed");
  tc.grad_clip = rc.num("grad_clip");
  tc.raster.resolution = rc.count("raster_resolution");
  tc.raster.tau = rc.num("tau");
  tc.weights = {rc.num("w_cls"), rc.num("w_coord"), rc.num("w_ras"), rc.num("w_ang")};
  tc.init = parse_init(rc.str("init"));
  if (!(tc.lr > 0.0)) throw Error(ErrorKind::kConfig, "lr must be positive");

  const std::vector<SceneRecord> records = load_dataset(rc.str("data"));
  if (records.empty()) throw Error(ErrorKind::kIo, "dataset is empty");

  const bool resume = rc.flag("resume");
  AdamState state;
  Checkpoint info;
  PolyRoomModel model = resume ? load_checkpoint(out, &state, &info) : PolyRoomModel(mc, tc.seed);
  if (resume && !(info.config == mc)) {
    throw Error(ErrorKind::kConfig, "model options differ from the checkpoint being resumed");
  }
  std::vector<TrainingSample> data;
  for (const SceneRecord& rec : records) {
    if (rec.gt.rooms.size() > mc.max_rooms) throw Error(ErrorKind::kCapacity, rec.id + " has more rooms than max_rooms");
    data.push_back(make_sample(rec, mc.vertices));
  }

  Trainer trainer(model, tc);
  if (resume) {
    trainer.optimizer().state() = state;
    trainer.set_epoch(info.epoch);
  }
  rc.echo(out);
  std::ofstream log(out / "train_log.jsonl", resume ? std::ios::app : std::ios::trunc);
  if (!log) throw Error(ErrorKind::kIo, "cannot write train_log.jsonl");
  const json extra = {{"train", rc.resolved()}};
  trainer.fit(
      data,
      [&](const StepLog& s) {
        log << s.to_json().dump() << '\n';
        log.flush();
        if (s.step % 50 == 0) std::cout << "step " << s.step << " loss " << s.loss << '\n' << std::flush;
      },
      [&](std::size_t epoch) { save_checkpoint(out, model, &trainer.optimizer().state(), epoch, extra); });
  save_checkpoint(out, model, &trainer.optimizer().state(), trainer.epoch(), extra);
  std::cout << "trained to step " << trainer.step() << ", checkpoint in " << out.string() << '\n';
  return kExitOk;
}

// ---- infer ----

std::vector<OptionSpec> infer_specs() {
  const ExtractionConfig ec;
  return {{"model", nullptr, "checkpoint directory"},
          {"scene", nullptr, "scene directory or dataset directory"},
          {"out", nullptr, "output directory"},
          {"use_gt_masks", false, "initialise from masks rasterised from the ground truth"},
          {"random_init", false, "random queries instead of mask-derived ones"},
          {"t_pro", ec.t_pro, "corner probability threshold"},
          {"t_ang", ec.t_ang, "angle cosine threshold"},
          {"dp_eps", ec.dp_eps, "simplification tolerance (pixels at 256 wide)"},
          {"svg", false, "also write an SVG per scene"},
          {"dump_queries", false, "write per-layer query snapshots"},
          {"seed", 0u, "seed for padded queries"}};
}

int run_infer(const RunConfig& rc) {
  const fs::path out = rc.str("out");
  ExtractionConfig ec{rc.num("t_pro"), rc.num("t_ang"), rc.num("dp_eps")};
  ec.validate();
  const PolyRoomModel model = load_checkpoint(rc.str("model"));
  const ModelConfig& mc = model.config();
  const std::vector<SceneRecord> records = load_dataset(rc.str("scene"));
  const bool gt_masks = rc.flag("use_gt_masks"), random = rc.flag("random_init"), svg = rc.flag("svg");
  const bool dump = rc.flag("dump_queries");
  const std::uint64_t seed = rc.seed("seed");
  rc.echo(out);

  std::vector<std::string> ids(records.size());
  parallel_for(records.size(), [&](std::size_t i) {
    const SceneRecord& rec = records[i];
    const InstanceMasks masks = gt_masks ? masks_from_floorplan(rec.gt) : rec.masks;
    if (masks.masks.size() > mc.max_rooms) throw Error(ErrorKind::kCapacity, rec.id + " has more masks than max_rooms");
    const RoomQueries q0 = random ? init_queries_random(masks.masks.size(), mc.max_rooms, mc.vertices, seed)
                                  : init_queries(masks, mc.max_rooms, mc.vertices, seed);
    const DecoderOutput dec = model.forward(rec.density, q0);
    const double w = static_cast<double>(rec.density.width()), h = static_cast<double>(rec.density.height());
    const VectorFloorplan fp = extract_floorplan(dec, q0, ec, w, h);
    export_json(fp, rec.id, out / (rec.id + ".json"));
    if (svg) export_svg(fp, out / (rec.id + ".svg"), &rec.density);
    if (dump) {
      json snaps = json::array();
      for (const ag::Tensor& q : dec.queries) snaps.push_back(std::vector<double>(q.data().begin(), q.data().end()));
      const json j = {{"id", rec.id},
                      {"M", mc.max_rooms},
                      {"N", mc.vertices},
                      {"valid_count", q0.valid_count},
                      {"width", w},
                      {"height", h},
                      {"queries", snaps},
                      {"corner_probability", corner_probabilities(dec.logits)}};
      std::ofstream qf(out / (rec.id + "_queries.json"), std::ios::trunc);
      qf << j.dump() << '\n';
    }
    for (const RoomDrop& d : fp.dropped) std::cerr << rec.id << ": dropped room " << d.source << ": " << d.reason << '\n';
    ids[i] = rec.id;
  });
  std::cout << "wrote " << ids.size() << " floorplans to " << out.string() << '\n';
  return kExitOk;
}

// ---- eval ----

std::vector<OptionSpec> eval_specs() {
  const EvalConfig ec;
  return {{"pred", nullptr, "predicted floorplans"},
          {"gt", nullptr, "ground-truth dataset or floorplans"},
          {"iou_thresh", ec.iou_threshold, "room IoU threshold"},
          {"corner_px", ec.corner_px, "corner distance threshold (pixels)"},
          {"angle_deg", ec.angle_deg, "angle threshold (degrees)"},
          {"out", "", "report path (default: <pred>/metrics.json)"}};
}

int run_eval(const RunConfig& rc) {
  const EvalConfig ec{rc.num("iou_thresh"), rc.num("corner_px"), rc.num("angle_deg")};
  const fs::path pred_dir = rc.str("pred");
  const auto gt = load_floorplans(rc.str("gt"));
  const auto pred = load_floorplans(pred_dir);
  if (gt.empty()) throw Error(ErrorKind::kCoverage, "no ground-truth floorplans found");
  std::vector<std::string> missing;
  std::vector<const std::pair<const std::string, Floorplan>*> items;
  for (const auto& entry : gt) {
    if (pred.count(entry.first) == 0) missing.push_back(entry.first);
    items.push_back(&entry);
  }
  if (!missing.empty()) {
    throw Error(ErrorKind::kCoverage, std::to_string(missing.size()) + " of " + std::to_string(gt.size()) +
                                          " ground-truth scenes have no prediction (first: " + missing.front() + ")");
  }
  std::vector<MetricsReport> per(items.size());
  parallel_for(items.size(), [&](std::size_t i) { per[i] = evaluate(pred.at(items[i]->first), items[i]->second, ec); });
  MetricsReport total;
  for (const MetricsReport& r : per) total += r;

  const fs::path report = rc.str("out").empty() ? pred_dir / "metrics.json" : fs::path(rc.str("out"));
  if (report.has_parent_path()) fs::create_directories(report.parent_path());
  rc.echo(report.has_parent_path() ? report.parent_path() : fs::path("."), "eval_config.json");
  std::ofstream out(report, std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + report.string());
  out << total.to_json(ec).dump(2) << '\n';
  std::cout << total.to_table();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PolyRoom floorplan reconstruction"};
  app.require_subcommand(1);
  struct Command {
    CLI::App* sub;
    RunConfig config;
    int (*run)(const RunConfig&);
  };
  std::vector<Command> commands;
  commands.reserve(4);
  commands.push_back({app.add_subcommand("synth", "generate a synthetic dataset"), RunConfig(synth_specs()), run_synth});
  commands.push_back({app.add_subcommand("train", "train a model"), RunConfig(train_specs()), run_train});
  commands.push_back({app.add_subcommand("infer", "reconstruct floorplans"), RunConfig(infer_specs()), run_infer});
  commands.push_back({app.add_subcommand("eval", "score predictions"), RunConfig(eval_specs()), run_eval});
  for (Command& c : commands) c.config.bind(*c.sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  for (Command& c : commands) {
    if (!c.sub->parsed()) continue;
    try {
      c.config.resolve();
      return c.run(c.config);
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << '\n';
      return exit_code(e.kind());
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitData;
    }
  }
  return kExitUsage;
}
