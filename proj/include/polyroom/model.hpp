#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "polyroom/autograd.hpp"
#include "polyroom/dataio.hpp"
#include "polyroom/query_init.hpp"

namespace polyroom {

struct ModelConfig {
  std::size_t max_rooms = 20;       // M
  std::size_t vertices = 40;        // N
  std::size_t d = 64;
  std::size_t layers = 6;
  std::size_t heads = 4;
  std::size_t points = 4;           // K, cross-attention samples per head
  std::size_t encoder_layers = 1;
  std::size_t feature_stride = 8;
  std::size_t ffn_dim = 128;
  bool room_aware = true;           // false: dense attention over all M*N queries
  bool detach_refs = true;          // stop gradients through Q between layers
  double corner_prior = 0.05;       // initial corner probability of the label head
  std::size_t max_query_elements = 1u << 22;  // cap on M * N * d

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

// Named, ordered parameter tensors.
class ParamStore {
 public:
  ag::Tensor& add(const std::string& name, ag::Shape shape, std::vector<double> values);
  ag::Tensor& get(const std::string& name);
  const ag::Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::vector<std::pair<std::string, ag::Tensor>>& all() { return entries_; }
  const std::vector<std::pair<std::string, ag::Tensor>>& all() const { return entries_; }
  std::size_t count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, ag::Tensor>> entries_;
  std::map<std::string, std::size_t> index_;
};

struct Linear {
  ag::Tensor weight;  // [in, out]
  ag::Tensor bias;    // [out]
  ag::Tensor operator()(const ag::Tensor& x) const { return ag::linear(x, weight, bias); }
};

struct LayerNorm {
  ag::Tensor gamma, beta;
  ag::Tensor operator()(const ag::Tensor& x) const { return ag::layer_norm(x, gamma, beta); }
};

struct MultiHeadAttention {
  Linear q, k, v, out;
  std::size_t heads = 1;
  // [B,T,d] queries against [B,S,d] keys/values -> [B,T,d].
  ag::Tensor operator()(const ag::Tensor& query, const ag::Tensor& key, const ag::Tensor& value) const;
};

struct RoomAwareSelfAttention {
  MultiHeadAttention intra, inter;
  LayerNorm intra_norm, inter_norm;
};

struct DenseSelfAttention {
  MultiHeadAttention attn;
  LayerNorm norm;
};

struct CrossAttention {
  Linear value, offsets, weights, out;
  LayerNorm norm;
  std::size_t heads = 1, points = 1;
};

struct DecoderLayer {
  RoomAwareSelfAttention room_attn;
  DenseSelfAttention dense_attn;
  CrossAttention cross;
  Linear ffn1, ffn2;
  LayerNorm ffn_norm;
  Linear offset1, offset2;  // offset2 starts at zero
};

struct EncoderLayer {
  MultiHeadAttention attn;
  LayerNorm attn_norm;
  Linear ffn1, ffn2;
  LayerNorm ffn_norm;
};

// Per-token multi-head attention among the N vertices of each room.
// x, pos: [M, N, d]; q = k = x + pos, v = x. Returns the attention branch only.
ag::Tensor intra_room_attention(const MultiHeadAttention& mha, const ag::Tensor& x, const ag::Tensor& pos);
// Attention among the M rooms at each vertex index.
ag::Tensor inter_room_attention(const MultiHeadAttention& mha, const ag::Tensor& x, const ag::Tensor& pos);
// intra then inter, each with residual + layer norm.
ag::Tensor room_aware_self_attention(const RoomAwareSelfAttention& block, const ag::Tensor& x, const ag::Tensor& pos);
// Dense attention over all M*N tokens with residual + layer norm.
ag::Tensor vanilla_self_attention(const DenseSelfAttention& block, const ag::Tensor& x, const ag::Tensor& pos);

/// Deformable-lite cross-attention. Each token predicts K offsets and K
/// softmax weights per head from x + pos, bilinearly samples the projected
/// feature grid at ref + offset and mixes the samples.
/// x, pos: [M, N, d]; refs: [M*N, 2] normalised; features: [h, w, d].
ag::Tensor cross_attention(const CrossAttention& block, const ag::Tensor& x, const ag::Tensor& pos,
                           const ag::Tensor& refs, const ag::Tensor& features);

// Score-buffer sizes per head for one self-attention block.
std::size_t room_aware_score_elements(std::size_t m, std::size_t n);
std::size_t vanilla_score_elements(std::size_t m, std::size_t n);

struct DecoderOutput {
  std::vector<ag::Tensor> queries;   // layers + 1 snapshots of [M*N, 2]
  std::vector<ag::Tensor> contents;  // per-layer content state [M, N, d]
  ag::Tensor logits;                 // [M*N, 2]; class 1 is "corner"
};

class PolyRoomModel {
 public:
  PolyRoomModel(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // [H/stride, W/stride, d] encoder output.
  ag::Tensor extract_features(const DensityMap& dm) const;
  // P = MLP(PE(Q)) for Q: [R, 2] -> [R, d].
  ag::Tensor positional_embed(const ag::Tensor& coords) const;
  DecoderOutput decode(const ag::Tensor& features, const RoomQueries& q0) const;
  DecoderOutput forward(const DensityMap& dm, const RoomQueries& q0) const;

  const DecoderLayer& layer(std::size_t i) const { return layers_.at(i); }
  DecoderLayer& layer(std::size_t i) { return layers_.at(i); }
  const ag::Tensor& content_queries() const { return content_; }

 private:
  Linear make_linear(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng);
  LayerNorm make_norm(const std::string& name, std::size_t d);
  MultiHeadAttention make_mha(const std::string& name, std::mt19937_64& rng);

  ModelConfig cfg_;
  ParamStore params_;
  std::vector<ag::Tensor> conv_w_, conv_b_;
  std::vector<EncoderLayer> encoder_;
  Linear pos1_, pos2_;
  ag::Tensor content_;  // [M, N, d]
  std::vector<DecoderLayer> layers_;
  Linear label_head_;
};

}  // namespace polyroom
