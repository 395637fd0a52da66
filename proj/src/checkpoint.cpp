#include <bit>
#include <cstring>
#include <fstream>

#include "polyroom/training.hpp"

namespace polyroom {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint blobs are little-endian");

namespace {

constexpr int kVersion = 1;

struct BlobWriter {
  std::ofstream out;
  std::size_t offset = 0;
  json table = json::array();

  void put(const std::string& name, const ag::Shape& shape, std::span<const double> values) {
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
    table.push_back({{"name", name}, {"shape", shape}, {"dtype", "f64"}, {"offset", offset}});
    offset += values.size() * sizeof(double);
  }
};

}  // namespace

void save_checkpoint(const fs::path& dir, const PolyRoomModel& model, const AdamState* adam, std::size_t epoch,
                     const json& extra) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  BlobWriter w;
  w.out.open(dir / "model.bin", std::ios::binary | std::ios::trunc);
  if (!w.out) throw Error(ErrorKind::kIo, "cannot write " + (dir / "model.bin").string());
  for (const auto& [name, t] : model.params().all()) w.put(name, t.shape(), t.data());
  if (adam != nullptr) {
    for (const auto& [name, t] : model.params().all()) {
      const auto m = adam->m.find(name), v = adam->v.find(name);
      if (m == adam->m.end() || v == adam->v.end()) continue;
      w.put("adam.m/" + name, t.shape(), m->second);
      w.put("adam.v/" + name, t.shape(), v->second);
    }
  }
  w.out.close();
  if (!w.out) throw Error(ErrorKind::kIo, "failed writing model.bin");

  json manifest = {{"version", kVersion},
                   {"config", model.config().to_json()},
                   {"step", adam != nullptr ? adam->step : 0},
                   {"epoch", epoch},
                   {"has_optimizer", adam != nullptr},
                   {"tensors", w.table},
                   {"extra", extra}};
  std::ofstream js(dir / "model.json", std::ios::trunc);
  if (!js) throw Error(ErrorKind::kIo, "cannot write " + (dir / "model.json").string());
  js << manifest.dump(2) << '\n';
}

PolyRoomModel load_checkpoint(const fs::path& dir, AdamState* adam, Checkpoint* info) {
  std::ifstream js(dir / "model.json");
  if (!js) throw Error(ErrorKind::kIo, "missing " + (dir / "model.json").string());
  json manifest;
  try {
    manifest = json::parse(js);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kSchema, std::string("model.json: ") + e.what());
  }
  std::ifstream bin(dir / "model.bin", std::ios::binary);
  if (!bin) throw Error(ErrorKind::kIo, "missing " + (dir / "model.bin").string());
  const std::vector<char> blob{std::istreambuf_iterator<char>(bin), std::istreambuf_iterator<char>()};

  try {
    if (manifest.at("version").get<int>() != kVersion) throw Error(ErrorKind::kSchema, "unsupported checkpoint version");
    const ModelConfig cfg = ModelConfig::from_json(manifest.at("config"));
    PolyRoomModel model(cfg, 0);
    std::map<std::string, std::pair<ag::Shape, std::vector<double>>> tensors;
    for (const json& entry : manifest.at("tensors")) {
      if (entry.at("dtype").get<std::string>() != "f64") throw Error(ErrorKind::kSchema, "only f64 tensors are supported");
      const ag::Shape shape = entry.at("shape").get<ag::Shape>();
      const std::size_t offset = entry.at("offset").get<std::size_t>();
      const std::size_t bytes = ag::numel(shape) * sizeof(double);
      if (offset + bytes > blob.size()) throw Error(ErrorKind::kSchema, "tensor extends past model.bin");
      std::vector<double> values(ag::numel(shape));
      std::memcpy(values.data(), blob.data() + offset, bytes);
      tensors[entry.at("name").get<std::string>()] = {shape, std::move(values)};
    }
    for (auto& [name, t] : model.params().all()) {
      const auto it = tensors.find(name);
      if (it == tensors.end()) throw Error(ErrorKind::kSchema, "checkpoint lacks parameter " + name);
      if (it->second.first != t.shape()) {
        throw Error(ErrorKind::kSchema, "shape mismatch for " + name + ": " + ag::shape_str(it->second.first));
      }
      std::copy(it->second.second.begin(), it->second.second.end(), t.data().begin());
      if (adam != nullptr) {
        const auto m = tensors.find("adam.m/" + name), v = tensors.find("adam.v/" + name);
        if (m != tensors.end() && v != tensors.end()) {
          adam->m[name] = m->second.second;
          adam->v[name] = v->second.second;
        }
      }
    }
    if (adam != nullptr) adam->step = manifest.at("step").get<std::size_t>();
    if (info != nullptr) {
      info->config = cfg;
      info->step = manifest.at("step").get<std::size_t>();
      info->epoch = manifest.at("epoch").get<std::size_t>();
      info->extra = manifest.value("extra", json());
    }
    return model;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kSchema, std::string("model.json: ") + e.what());
  }
}

}  // namespace polyroom
