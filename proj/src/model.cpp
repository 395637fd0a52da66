#include "polyroom/model.hpp"

#include <cmath>
#include <numbers>

namespace polyroom {

using ag::Tensor;

void ModelConfig::validate() const {
  if (max_rooms == 0 || vertices < 3) throw Error(ErrorKind::kConfig, "need M >= 1 and N >= 3");
  if (d == 0 || heads == 0 || d % heads != 0) throw Error(ErrorKind::kConfig, "d must be divisible by heads");
  if (d % 4 != 0) throw Error(ErrorKind::kConfig, "d must be divisible by 4 for the positional encoding");
  if (layers == 0 || points == 0 || ffn_dim == 0) throw Error(ErrorKind::kConfig, "layers, points and ffn_dim must be positive");
  if (feature_stride == 0 || (feature_stride & (feature_stride - 1)) != 0) {
    throw Error(ErrorKind::kConfig, "feature_stride must be a power of two");
  }
  if (max_rooms * vertices * d > max_query_elements) throw Error(ErrorKind::kConfig, "M * N * d exceeds the configured cap");
  if (!(corner_prior > 0.0 && corner_prior < 1.0)) throw Error(ErrorKind::kConfig, "corner_prior must be in (0, 1)");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"M", max_rooms},
          {"N", vertices},
          {"d", d},
          {"layers", layers},
          {"heads", heads},
          {"K", points},
          {"encoder_layers", encoder_layers},
          {"feature_stride", feature_stride},
          {"ffn_dim", ffn_dim},
          {"room_aware", room_aware},
          {"detach_refs", detach_refs},
          {"corner_prior", corner_prior}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.max_rooms = j.at("M").get<std::size_t>();
    c.vertices = j.at("N").get<std::size_t>();
    c.d = j.at("d").get<std::size_t>();
    c.layers = j.at("layers").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.points = j.at("K").get<std::size_t>();
    c.encoder_layers = j.at("encoder_layers").get<std::size_t>();
    c.feature_stride = j.at("feature_stride").get<std::size_t>();
    c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
    c.room_aware = j.at("room_aware").get<bool>();
    c.detach_refs = j.at("detach_refs").get<bool>();
    c.corner_prior = j.at("corner_prior").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kSchema, std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

ag::Tensor& ParamStore::add(const std::string& name, ag::Shape shape, std::vector<double> values) {
  if (contains(name)) throw Error(ErrorKind::kContract, "duplicate parameter " + name);
  index_[name] = entries_.size();
  entries_.emplace_back(name, Tensor::from(std::move(shape), std::move(values), true));
  return entries_.back().second;
}

ag::Tensor& ParamStore::get(const std::string& name) {
  const auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorKind::kSchema, "unknown parameter " + name);
  return entries_[it->second].second;
}

const ag::Tensor& ParamStore::get(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorKind::kSchema, "unknown parameter " + name);
  return entries_[it->second].second;
}

std::size_t ParamStore::count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

Tensor MultiHeadAttention::operator()(const Tensor& query, const Tensor& key, const Tensor& value) const {
  const std::size_t b = query.dim(0), t = query.dim(1), s = key.dim(1), d = query.dim(2);
  const std::size_t dh = d / heads;
  auto split = [&](const Tensor& x, std::size_t len) {
    Tensor r = ag::reshape(x, {b, len, heads, dh});
    return ag::reshape(ag::permute(r, {0, 2, 1, 3}), {b * heads, len, dh});
  };
  Tensor attn = ag::scaled_dot_attention(split(q(query), t), split(k(key), s), split(v(value), s));
  Tensor merged = ag::permute(ag::reshape(attn, {b, heads, t, dh}), {0, 2, 1, 3});
  return out(ag::reshape(merged, {b, t, d}));
}

Tensor intra_room_attention(const MultiHeadAttention& mha, const Tensor& x, const Tensor& pos) {
  const Tensor qk = ag::add(x, pos);
  return mha(qk, qk, x);
}

Tensor inter_room_attention(const MultiHeadAttention& mha, const Tensor& x, const Tensor& pos) {
  const Tensor xt = ag::permute(x, {1, 0, 2});
  const Tensor qk = ag::permute(ag::add(x, pos), {1, 0, 2});
  return ag::permute(mha(qk, qk, xt), {1, 0, 2});
}

Tensor room_aware_self_attention(const RoomAwareSelfAttention& block, const Tensor& x, const Tensor& pos) {
  const Tensor h = block.intra_norm(ag::add(x, intra_room_attention(block.intra, x, pos)));
  return block.inter_norm(ag::add(h, inter_room_attention(block.inter, h, pos)));
}

Tensor vanilla_self_attention(const DenseSelfAttention& block, const Tensor& x, const Tensor& pos) {
  const std::size_t m = x.dim(0), n = x.dim(1), d = x.dim(2);
  const Tensor flat = ag::reshape(x, {1, m * n, d});
  const Tensor qk = ag::reshape(ag::add(x, pos), {1, m * n, d});
  const Tensor attn = ag::reshape(block.attn(qk, qk, flat), {m, n, d});
  return block.norm(ag::add(x, attn));
}

std::size_t room_aware_score_elements(std::size_t m, std::size_t n) { return m * n * n + n * m * m; }
std::size_t vanilla_score_elements(std::size_t m, std::size_t n) { return (m * n) * (m * n); }

Tensor cross_attention(const CrossAttention& block, const Tensor& x, const Tensor& pos, const Tensor& refs,
                       const Tensor& features) {
  const std::size_t m = x.dim(0), n = x.dim(1), d = x.dim(2);
  const std::size_t t = m * n, heads = block.heads, k = block.points, dh = d / heads;
  const std::size_t fh = features.dim(0), fw = features.dim(1);
  if (refs.dim(0) != t || refs.dim(1) != 2) throw Error(ErrorKind::kShape, "cross_attention refs " + ag::shape_str(refs.shape()));

  const Tensor value = block.value(features);  // [fh, fw, d]
  const Tensor query = ag::reshape(ag::add(x, pos), {t, d});

  // Offsets are predicted in feature cells and converted to normalised units.
  Tensor offsets = ag::reshape(block.offsets(query), {t, heads * k, 2});
  const Tensor off_x = ag::scale(ag::slice(offsets, 2, 0, 1), 1.0 / static_cast<double>(fw));
  const Tensor off_y = ag::scale(ag::slice(offsets, 2, 1, 1), 1.0 / static_cast<double>(fh));
  const Tensor ref3 = ag::reshape(refs, {t, 1, 2});
  const Tensor ref_rep = ag::concat(std::vector<Tensor>(heads * k, ref3), 1);  // [t, H*K, 2]
  const Tensor locations = ag::add(ref_rep, ag::concat({off_x, off_y}, 2));

  // [t, H, K, 2] -> [t*K, H, 2] so that group h samples head h's channels.
  const Tensor grouped = ag::reshape(ag::permute(ag::reshape(locations, {t, heads, k, 2}), {0, 2, 1, 3}), {t * k, heads, 2});
  const Tensor sampled = ag::bilinear_sample(value, grouped);  // [t*K, H, dh]
  const Tensor per_head = ag::reshape(ag::permute(ag::reshape(sampled, {t, k, heads, dh}), {0, 2, 1, 3}), {t * heads, k, dh});

  const Tensor w = ag::softmax(ag::reshape(block.weights(query), {t * heads, k}), 1);
  const Tensor mixed = ag::bmm(ag::reshape(w, {t * heads, 1, k}), per_head);  // [t*H, 1, dh]
  const Tensor projected = block.out(ag::reshape(mixed, {m, n, d}));
  return block.norm(ag::add(x, projected));
}

namespace {

std::vector<double> xavier(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> w(in * out);
  for (double& v : w) v = dist(rng);
  return w;
}

// Fixed 2D sinusoidal encoding of feature-cell centres, [h*w, d].
Tensor grid_encoding(std::size_t h, std::size_t w, std::size_t d) {
  std::vector<double> centres;
  centres.reserve(h * w * 2);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      centres.push_back((static_cast<double>(c) + 0.5) / static_cast<double>(w));
      centres.push_back((static_cast<double>(r) + 0.5) / static_cast<double>(h));
    }
  }
  return ag::sinusoidal_embed(Tensor::from({h * w, 2}, std::move(centres)), d);
}

}  // namespace

Linear PolyRoomModel::make_linear(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng) {
  Linear l;
  l.weight = params_.add(name + ".weight", {in, out}, xavier(in, out, rng));
  l.bias = params_.add(name + ".bias", {out}, std::vector<double>(out, 0.0));
  return l;
}

LayerNorm PolyRoomModel::make_norm(const std::string& name, std::size_t d) {
  LayerNorm n;
  n.gamma = params_.add(name + ".gamma", {d}, std::vector<double>(d, 1.0));
  n.beta = params_.add(name + ".beta", {d}, std::vector<double>(d, 0.0));
  return n;
}

MultiHeadAttention PolyRoomModel::make_mha(const std::string& name, std::mt19937_64& rng) {
  MultiHeadAttention m;
  m.heads = cfg_.heads;
  m.q = make_linear(name + ".q", cfg_.d, cfg_.d, rng);
  m.k = make_linear(name + ".k", cfg_.d, cfg_.d, rng);
  m.v = make_linear(name + ".v", cfg_.d, cfg_.d, rng);
  m.out = make_linear(name + ".out", cfg_.d, cfg_.d, rng);
  return m;
}

PolyRoomModel::PolyRoomModel(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = cfg_.d;

  // Stride-2 3x3 convolutions down to the feature stride, widening towards d.
  std::size_t downs = 0;
  while ((std::size_t{1} << downs) < cfg_.feature_stride) ++downs;
  std::size_t channels = 1;
  for (std::size_t i = 0; i < std::max<std::size_t>(downs, 1); ++i) {
    const std::size_t remaining = std::max<std::size_t>(downs, 1) - 1 - i;
    const std::size_t next = std::max<std::size_t>(d >> remaining, 4);
    const std::size_t fan_in = channels * 9;
    std::vector<double> w = xavier(fan_in, next, rng);  // reinterpreted as [next, channels, 3, 3]
    conv_w_.push_back(params_.add("encoder.conv" + std::to_string(i) + ".weight", {next, channels, 3, 3}, std::move(w)));
    conv_b_.push_back(params_.add("encoder.conv" + std::to_string(i) + ".bias", {next}, std::vector<double>(next, 0.0)));
    channels = next;
  }
  if (channels != d) throw Error(ErrorKind::kConfig, "encoder channel plan does not reach d");

  for (std::size_t i = 0; i < cfg_.encoder_layers; ++i) {
    const std::string p = "encoder.layer" + std::to_string(i);
    EncoderLayer l;
    l.attn = make_mha(p + ".attn", rng);
    l.attn_norm = make_norm(p + ".attn_norm", d);
    l.ffn1 = make_linear(p + ".ffn1", d, cfg_.ffn_dim, rng);
    l.ffn2 = make_linear(p + ".ffn2", cfg_.ffn_dim, d, rng);
    l.ffn_norm = make_norm(p + ".ffn_norm", d);
    encoder_.push_back(std::move(l));
  }

  pos1_ = make_linear("query_pos.fc1", d, d, rng);
  pos2_ = make_linear("query_pos.fc2", d, d, rng);

  {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> c(cfg_.max_rooms * cfg_.vertices * d);
    for (double& v : c) v = normal(rng);
    content_ = params_.add("content_queries", {cfg_.max_rooms, cfg_.vertices, d}, std::move(c));
  }

  const std::size_t hk = cfg_.heads * cfg_.points;
  for (std::size_t i = 0; i < cfg_.layers; ++i) {
    const std::string p = "decoder.layer" + std::to_string(i);
    DecoderLayer l;
    if (cfg_.room_aware) {
      l.room_attn.intra = make_mha(p + ".intra", rng);
      l.room_attn.inter = make_mha(p + ".inter", rng);
      l.room_attn.intra_norm = make_norm(p + ".intra_norm", d);
      l.room_attn.inter_norm = make_norm(p + ".inter_norm", d);
    } else {
      l.dense_attn.attn = make_mha(p + ".dense", rng);
      l.dense_attn.norm = make_norm(p + ".dense_norm", d);
    }
    l.cross.heads = cfg_.heads;
    l.cross.points = cfg_.points;
    l.cross.value = make_linear(p + ".cross.value", d, d, rng);
    // Offsets start at zero weight with a ring of sample points per head.
    l.cross.offsets.weight = params_.add(p + ".cross.offsets.weight", {d, hk * 2}, std::vector<double>(d * hk * 2, 0.0));
    std::vector<double> ring(hk * 2);
    for (std::size_t h = 0; h < cfg_.heads; ++h) {
      const double theta = 2.0 * std::numbers::pi * static_cast<double>(h) / static_cast<double>(cfg_.heads);
      for (std::size_t kk = 0; kk < cfg_.points; ++kk) {
        const double radius = 0.5 * static_cast<double>(kk);
        ring[(h * cfg_.points + kk) * 2] = radius * std::cos(theta);
        ring[(h * cfg_.points + kk) * 2 + 1] = radius * std::sin(theta);
      }
    }
    l.cross.offsets.bias = params_.add(p + ".cross.offsets.bias", {hk * 2}, std::move(ring));
    l.cross.weights.weight = params_.add(p + ".cross.weights.weight", {d, hk}, std::vector<double>(d * hk, 0.0));
    l.cross.weights.bias = params_.add(p + ".cross.weights.bias", {hk}, std::vector<double>(hk, 0.0));
    l.cross.out = make_linear(p + ".cross.out", d, d, rng);
    l.cross.norm = make_norm(p + ".cross.norm", d);
    l.ffn1 = make_linear(p + ".ffn1", d, cfg_.ffn_dim, rng);
    l.ffn2 = make_linear(p + ".ffn2", cfg_.ffn_dim, d, rng);
    l.ffn_norm = make_norm(p + ".ffn_norm", d);
    l.offset1 = make_linear(p + ".offset1", d, d, rng);
    l.offset2.weight = params_.add(p + ".offset2.weight", {d, 2}, std::vector<double>(d * 2, 0.0));
    l.offset2.bias = params_.add(p + ".offset2.bias", {2}, std::vector<double>(2, 0.0));
    layers_.push_back(std::move(l));
  }

  label_head_ = make_linear("label_head", d, 2, rng);
  label_head_.bias.data()[1] = std::log(cfg_.corner_prior / (1.0 - cfg_.corner_prior));
}

Tensor PolyRoomModel::extract_features(const DensityMap& dm) const {
  const std::size_t h = dm.height(), w = dm.width(), stride = cfg_.feature_stride;
  if (h == 0 || w == 0 || h % stride != 0 || w % stride != 0) {
    throw Error(ErrorKind::kShape, "density map size must be divisible by the feature stride");
  }
  std::vector<double> pixels(dm.grid.cells().begin(), dm.grid.cells().end());
  Tensor x = Tensor::from({1, h, w}, std::move(pixels));
  for (std::size_t i = 0; i < conv_w_.size(); ++i) {
    const std::size_t s = (std::size_t{1} << i) < stride ? 2 : 1;
    x = ag::relu(ag::conv2d(x, conv_w_[i], conv_b_[i], s, 1));
  }
  const std::size_t fh = x.dim(1), fw = x.dim(2), d = cfg_.d;
  if (fh != h / stride || fw != w / stride) throw Error(ErrorKind::kShape, "encoder produced an unexpected grid");
  Tensor tokens = ag::reshape(ag::transpose(ag::reshape(x, {d, fh * fw})), {1, fh * fw, d});
  const Tensor pos = ag::reshape(grid_encoding(fh, fw, d), {1, fh * fw, d});
  for (const EncoderLayer& l : encoder_) {
    const Tensor qk = ag::add(tokens, pos);
    tokens = l.attn_norm(ag::add(tokens, l.attn(qk, qk, tokens)));
    tokens = l.ffn_norm(ag::add(tokens, l.ffn2(ag::relu(l.ffn1(tokens)))));
  }
  return ag::reshape(tokens, {fh, fw, d});
}

Tensor PolyRoomModel::positional_embed(const Tensor& coords) const {
  return pos2_(ag::relu(pos1_(ag::sinusoidal_embed(coords, cfg_.d))));
}

DecoderOutput PolyRoomModel::decode(const Tensor& features, const RoomQueries& q0) const {
  const std::size_t m = cfg_.max_rooms, n = cfg_.vertices, d = cfg_.d;
  if (q0.rooms != m || q0.vertices != n || q0.coords.size() != m * n * 2) {
    throw Error(ErrorKind::kConfig, "queries are " + std::to_string(q0.rooms) + "x" + std::to_string(q0.vertices) +
                                        ", model expects " + std::to_string(m) + "x" + std::to_string(n));
  }
  DecoderOutput out;
  Tensor refs = Tensor::from({m * n, 2}, q0.coords);
  out.queries.push_back(refs);
  Tensor x = content_;
  for (const DecoderLayer& l : layers_) {
    const Tensor pos = ag::reshape(positional_embed(refs), {m, n, d});
    x = cfg_.room_aware ? room_aware_self_attention(l.room_attn, x, pos) : vanilla_self_attention(l.dense_attn, x, pos);
    x = cross_attention(l.cross, x, pos, refs, features);
    x = l.ffn_norm(ag::add(x, l.ffn2(ag::relu(l.ffn1(x)))));
    const Tensor delta = l.offset2(ag::relu(l.offset1(ag::reshape(x, {m * n, d}))));
    const Tensor next = ag::clamp(ag::add(refs, delta), 0.0, 1.0);
    out.queries.push_back(next);
    out.contents.push_back(x);
    refs = cfg_.detach_refs ? next.detach() : next;
  }
  out.logits = label_head_(ag::reshape(x, {m * n, d}));
  return out;
}

DecoderOutput PolyRoomModel::forward(const DensityMap& dm, const RoomQueries& q0) const {
  return decode(extract_features(dm), q0);
}

}  // namespace polyroom
