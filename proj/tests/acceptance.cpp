// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "polyroom/evaluation.hpp"
#include "polyroom/extraction.hpp"
#include "polyroom/training.hpp"
#include "test_support.hpp"

using namespace polyroom;
using ag::Tensor;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Tensor rand_tensor(ag::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(ag::numel(shape));
  for (double& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

Tensor away_from_zero(ag::Shape shape, std::mt19937_64& rng) {
  Tensor t = rand_tensor(std::move(shape), rng);
  for (double& x : t.data()) x = (x < 0 ? -0.05 : 0.05) + x;
  return t;
}

Tensor readout(const Tensor& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ag::sum(ag::mul(y, rand_tensor(y.shape(), rng)));
}

void scramble(PolyRoomModel& model, std::uint64_t seed, double amp) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-amp, amp);
  for (auto& [name, t] : model.params().all()) {
    for (double& v : t.data()) v += u(rng);
  }
}

ModelConfig toy_config() {
  ModelConfig c;
  c.max_rooms = 2;
  c.vertices = 4;
  c.d = 8;
  c.layers = 1;
  c.heads = 2;
  c.points = 2;
  c.feature_stride = 4;
  c.ffn_dim = 8;
  return c;
}

// ---------------------------------------------------------------------------
// 1. Finite-difference checks of every op and composite block.

Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  std::map<std::string, double> worst;
  auto check = [&](const std::string& name, const std::function<Tensor()>& f, std::vector<Tensor> in) {
    worst[name] = std::max(worst[name], ag::grad_check(f, std::move(in)));
  };
  for (std::uint64_t trial = 0; trial < 3; ++trial) {
    std::mt19937_64 rng(100 + trial);
    Tensor a = away_from_zero({3, 4}, rng), b = away_from_zero({3, 4}, rng), bias = rand_tensor({4}, rng);
    check("add", [&] { return readout(ag::add(a, b), 1); }, {a, b});
    check("sub", [&] { return readout(ag::sub(a, b), 2); }, {a, b});
    check("mul", [&] { return readout(ag::mul(a, b), 3); }, {a, b});
    check("scale", [&] { return readout(ag::scale(a, -1.7), 4); }, {a});
    check("add_bias", [&] { return readout(ag::add_bias(a, bias), 5); }, {a, bias});
    check("relu", [&] { return readout(ag::relu(a), 6); }, {a});
    check("sigmoid", [&] { return readout(ag::sigmoid(a), 7); }, {a});
    check("clamp", [&] { return readout(ag::clamp(a, -0.5, 0.5), 8); }, {a});

    Tensor t3 = rand_tensor({2, 3, 4}, rng), t1 = rand_tensor({2, 1, 4}, rng), m = rand_tensor({3, 5}, rng);
    check("reshape", [&] { return readout(ag::reshape(t3, {6, 4}), 9); }, {t3});
    check("transpose", [&] { return readout(ag::transpose(m), 10); }, {m});
    check("permute", [&] { return readout(ag::permute(t3, {2, 0, 1}), 11); }, {t3});
    check("concat", [&] { return readout(ag::concat({t3, t1}, 1), 12); }, {t3, t1});
    check("slice", [&] { return readout(ag::slice(t3, 2, 1, 2), 13); }, {t3});
    check("gather_rows", [&] { return readout(ag::gather_rows(m, {2, 0, 2}), 14); }, {m});

    Tensor ma = rand_tensor({3, 4}, rng), mb = rand_tensor({4, 2}, rng);
    Tensor bx = rand_tensor({2, 3, 4}, rng), by = rand_tensor({2, 4, 5}, rng), w = rand_tensor({4, 3}, rng), lb = rand_tensor({3}, rng);
    check("matmul", [&] { return readout(ag::matmul(ma, mb), 15); }, {ma, mb});
    check("bmm", [&] { return readout(ag::bmm(bx, by), 16); }, {bx, by});
    check("linear", [&] { return readout(ag::linear(bx, w, lb), 17); }, {bx, w, lb});

    Tensor s = rand_tensor({2, 3, 4}, rng, -2, 2), g = rand_tensor({4}, rng), be = rand_tensor({4}, rng);
    for (std::size_t axis = 0; axis < 3; ++axis) {
      check("softmax", [&] { return readout(ag::softmax(s, axis), 18 + axis); }, {s});
    }
    check("layer_norm", [&] { return readout(ag::layer_norm(s, g, be), 21); }, {s, g, be});

    Tensor q = rand_tensor({2, 3, 4}, rng), k = rand_tensor({2, 5, 4}, rng), v = rand_tensor({2, 5, 4}, rng);
    check("scaled_dot_attention", [&] { return readout(ag::scaled_dot_attention(q, k, v), 22); }, {q, k, v});

    Tensor grid = rand_tensor({5, 6, 6}, rng), pts = rand_tensor({4, 3, 2}, rng, 0.15, 0.85);
    for (double& x : pts.data()) x = (std::floor(x * 6) + 0.6 + 0.3 * (x * 6 - std::floor(x * 6))) / 6;
    check("bilinear_sample", [&] { return readout(ag::bilinear_sample(grid, pts), 23); }, {grid, pts});

    Tensor cx = rand_tensor({2, 6, 6}, rng), cw = rand_tensor({3, 2, 3, 3}, rng), cb = rand_tensor({3}, rng);
    check("conv2d", [&] { return readout(ag::conv2d(cx, cw, cb, 2, 1), 24); }, {cx, cw, cb});

    Tensor r1 = away_from_zero({3, 4}, rng), r2 = rand_tensor({3, 4}, rng);
    for (double& x : r2.data()) x *= 0.01;
    check("sum", [&] { return ag::sum(ag::mul(r1, r1)); }, {r1});
    check("mean", [&] { return ag::mean(ag::mul(r1, r2)); }, {r1, r2});
    check("l1", [&] { return ag::l1(r1, r2); }, {r1, r2});
    check("cross_entropy", [&] { return ag::cross_entropy(r1, {0, 3, 1}); }, {r1});

    Tensor coords = rand_tensor({3, 2}, rng, 0, 1);
    check("sinusoidal_embed", [&] { return readout(ag::sinusoidal_embed(coords, 16), 25); }, {coords});

    // Composite blocks on a toy model with every parameter perturbed.
    ModelConfig mc = toy_config();
    mc.detach_refs = false;
    PolyRoomModel model(mc, 200 + trial);
    scramble(model, 300 + trial, 0.1);
    Tensor x = rand_tensor({2, 3, 8}, rng), pos = rand_tensor({2, 3, 8}, rng);
    Tensor refs = rand_tensor({6, 2}, rng, 0.2, 0.8), feats = rand_tensor({4, 4, 8}, rng);
    std::vector<Tensor> room_in{x, pos}, cross_in{x, pos, refs, feats}, all;
    for (auto& [name, p] : model.params().all()) {
      all.push_back(p);
      if (name.starts_with("decoder.layer0.in")) room_in.push_back(p);
      if (name.starts_with("decoder.layer0.cross")) cross_in.push_back(p);
    }
    const DecoderLayer& layer = model.layer(0);
    check("room_aware_self_attention", [&] { return readout(room_aware_self_attention(layer.room_attn, x, pos), 26); }, room_in);
    check("cross_attention", [&] { return readout(cross_attention(layer.cross, x, pos, refs, feats), 27); }, cross_in);
    DensityMap dm{Grid<float>(16, 16)};
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (float& v : dm.grid.cells()) v = static_cast<float>(u(rng));
    RoomQueries q0{2, 4, std::vector<double>(16), 2};
    for (double& c : q0.coords) c = 0.1 + 0.8 * u(rng);
    check("encoder_decoder", [&] {
      const DecoderOutput out = model.forward(dm, q0);
      return ag::add(readout(out.queries.back(), 28), readout(out.logits, 29));
    }, all);

    ModelConfig vc = toy_config();
    vc.room_aware = false;
    PolyRoomModel vanilla(vc, 400 + trial);
    scramble(vanilla, 500 + trial, 0.3);
    std::vector<Tensor> dense_in{x, pos};
    for (auto& [name, p] : vanilla.params().all()) {
      if (name.starts_with("decoder.layer0.dense")) dense_in.push_back(p);
    }
    check("vanilla_self_attention", [&] { return readout(vanilla_self_attention(vanilla.layer(0).dense_attn, x, pos), 30); }, dense_in);

    // Losses on pixel-space polygons; scaled so the floor of 1 in the
    // relative error does not hide small gradients.
    const std::vector<Point2> gt{{65, 10}, {95, 10}, {95, 50}, {80, 50}, {80, 90}, {65, 90}};
    std::uniform_real_distribution<double> jit(-2, 2);
    std::vector<double> pv;
    for (const Point2& p : gt) {
      pv.push_back(p.x + jit(rng));
      pv.push_back(p.y + jit(rng));
    }
    Tensor pred = Tensor::from({6, 2}, pv);
    check("soft_raster_l1", [&] { return ag::scale(soft_raster_l1(pred, gt, {24, 1.0}), 1e3); }, {pred});
    const std::vector<double> cosines(6, 0.0);
    check("angle_l1", [&] { return ag::scale(angle_l1(pred, cosines), 1e2); }, {pred});
  }
  const double elapsed = seconds_since(t0);
  double max_err = 0.0;
  std::string worst_name;
  for (const auto& [name, e] : worst) {
    if (e >= max_err) {
      max_err = e;
      worst_name = name;
    }
  }
  return {max_err < 1e-5 && elapsed < 60.0,
          fmt("%zu ops/blocks, max rel err %.2e (%s), %.1f s", worst.size(), max_err, worst_name.c_str(), elapsed)};
}

// ---------------------------------------------------------------------------
// 2. Factorised attention against a block-masked dense oracle.

std::vector<double> masked_dense(const MultiHeadAttention& mha, const std::vector<double>& qk, const std::vector<double>& val,
                                 std::size_t t, std::size_t d, const std::function<bool(std::size_t, std::size_t)>& allowed) {
  auto proj = [&](const Linear& l, const std::vector<double>& x) {
    std::vector<double> y(t * d);
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t o = 0; o < d; ++o) {
        double acc = l.bias.data()[o];
        for (std::size_t k = 0; k < d; ++k) acc += x[i * d + k] * l.weight.data()[k * d + o];
        y[i * d + o] = acc;
      }
    }
    return y;
  };
  const auto q = proj(mha.q, qk), k = proj(mha.k, qk), v = proj(mha.v, val);
  const std::size_t dh = d / mha.heads;
  std::vector<double> merged(t * d, 0.0);
  for (std::size_t h = 0; h < mha.heads; ++h) {
    for (std::size_t i = 0; i < t; ++i) {
      std::vector<double> s(t, 0.0);
      double mx = -1e300;
      for (std::size_t j = 0; j < t; ++j) {
        if (!allowed(i, j)) continue;
        for (std::size_t c = 0; c < dh; ++c) s[j] += q[i * d + h * dh + c] * k[j * d + h * dh + c];
        s[j] /= std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, s[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < t; ++j) z += allowed(i, j) ? std::exp(s[j] - mx) : 0.0;
      for (std::size_t j = 0; j < t; ++j) {
        if (!allowed(i, j)) continue;
        const double p = std::exp(s[j] - mx) / z;
        for (std::size_t c = 0; c < dh; ++c) merged[i * d + h * dh + c] += p * v[j * d + h * dh + c];
      }
    }
  }
  return proj(mha.out, merged);
}

Outcome attention_factorization() {
  ModelConfig mc = toy_config();
  mc.heads = 1;
  mc.max_rooms = 20;
  mc.vertices = 40;
  PolyRoomModel aware(mc, 1);
  scramble(aware, 2, 0.3);
  mc.room_aware = false;
  const PolyRoomModel dense(mc, 1);

  double err = 0.0;
  std::mt19937_64 rng(3);
  for (std::size_t heads : {1u, 2u}) {
    ModelConfig hc = toy_config();
    hc.heads = heads;
    PolyRoomModel m(hc, 4 + heads);
    scramble(m, 6 + heads, 0.3);
    const std::size_t rooms = 3, n = 5, d = 8;
    const Tensor x = rand_tensor({rooms, n, d}, rng), pos = rand_tensor({rooms, n, d}, rng);
    std::vector<double> qk(rooms * n * d), val(x.data().begin(), x.data().end());
    for (std::size_t i = 0; i < qk.size(); ++i) qk[i] = x.data()[i] + pos.data()[i];
    const auto& ra = m.layer(0).room_attn;
    const Tensor intra = intra_room_attention(ra.intra, x, pos);
    const auto want_intra = masked_dense(ra.intra, qk, val, rooms * n, d, [&](std::size_t i, std::size_t j) { return i / n == j / n; });
    const Tensor inter = inter_room_attention(ra.inter, x, pos);
    const auto want_inter = masked_dense(ra.inter, qk, val, rooms * n, d, [&](std::size_t i, std::size_t j) { return i % n == j % n; });
    for (std::size_t i = 0; i < want_intra.size(); ++i) {
      err = std::max(err, std::abs(intra.data()[i] - want_intra[i]));
      err = std::max(err, std::abs(inter.data()[i] - want_inter[i]));
    }
  }

  const Tensor x = rand_tensor({20, 40, 8}, rng), pos = rand_tensor({20, 40, 8}, rng);
  ag::reset_attention_stats();
  room_aware_self_attention(aware.layer(0).room_attn, x, pos);
  const std::size_t factored = ag::attention_stats().score_elements;
  ag::reset_attention_stats();
  vanilla_self_attention(dense.layer(0).dense_attn, x, pos);
  const std::size_t full = ag::attention_stats().score_elements;
  const double ratio = static_cast<double>(full) / static_cast<double>(factored);
  return {err < 1e-10 && factored == 48000 && full == 640000 && ratio >= 10.0,
          fmt("oracle max abs err %.1e; score elements %zu vs %zu (%.1fx)", err, factored, full, ratio)};
}

// ---------------------------------------------------------------------------
// 3. Representation round trip.

Outcome representation_round_trip() {
  std::mt19937_64 rng(2024);
  std::size_t tried = 0, accepted = 0, failures = 0;
  while (accepted < 1000) {
    ++tried;
    const Polygon p = normalize_start(fixtures::random_rectilinear(rng, 5));
    if (p.size() > 20 || fixtures::min_corner_gap(p) < 2.0 * perimeter(p) / 40.0) continue;
    ++accepted;
    const Polygon back = sequence_to_polygon(encode_room(p, 40));
    failures += !(back == p);
  }
  return {failures == 0, fmt("%zu polygons (%zu drawn), %zu failures", accepted, tried, failures)};
}

// ---------------------------------------------------------------------------
// 4. Hungarian matching against permutation enumeration.

Outcome matching_oracle() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> rooms(1, 6), extra(0, 2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t mismatches = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t gt = rooms(rng), m = gt + extra(rng), n = 5;
    SceneTarget t;
    t.vertices = n;
    t.width = t.height = 1;
    for (std::size_t i = 0; i < gt; ++i) {
      std::vector<double> c(n * 2);
      for (double& v : c) v = u(rng);
      t.coords.push_back(c);
      t.labels.emplace_back(n, 0);
      t.cosines.emplace_back(n, 0.0);
    }
    std::vector<double> pred(m * n * 2);
    for (double& v : pred) v = u(rng);
    const MatchResult r = match_rooms(pred, m, t);
    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    do {
      double c = 0.0;
      for (std::size_t i = 0; i < gt; ++i) c += pair_cost(std::span(pred).subspan(perm[i] * n * 2, n * 2), t.coords[i]);
      best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    const double diff = std::abs(r.total_cost - best);
    worst = std::max(worst, diff);
    mismatches += diff > 1e-12;
  }
  return {mismatches == 0, fmt("200 instances, %zu mismatches, max |diff| %.1e", mismatches, worst)};
}

// ---------------------------------------------------------------------------
// 5. Extraction identity on GT-derived sequences.

Outcome extraction_identity() {
  const SynthConfig sc;  // 256 x 256, the frame the DP tolerance is quoted in
  const ExtractionConfig cfg;
  std::size_t rooms = 0, exact = 0;
  for (std::uint64_t seed = 5000; rooms < 500; ++seed) {
    const SceneRecord rec = generate_scene(seed, sc);
    for (const Polygon& gt : rec.gt.rooms) {
      if (rooms == 500) break;
      const RoomSequence s = encode_room(gt, kDefaultSamples);
      std::vector<double> probs;
      for (const LabeledVertex& v : s.vertices) probs.push_back(v.label);
      const Polygon got = extract_room(probs, s.points(), cfg, cfg.dp_eps);
      exact += got == normalize_start(ensure_clockwise(gt));
      ++rooms;
    }
  }
  return {exact == rooms, fmt("%zu/%zu rooms reproduced exactly", exact, rooms)};
}

// ---------------------------------------------------------------------------
// 6. Metric self-test.

Outcome metric_self_test() {
  bool ok = true;
  std::size_t scenes = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed, ++scenes) {
    const SceneRecord rec = generate_scene(seed, SynthConfig{});
    const MetricsReport r = evaluate(rec.gt, rec.gt, {});
    for (const LevelCounts* l : {&r.room, &r.corner, &r.angle}) {
      ok &= l->precision() == 1.0 && l->recall() == 1.0 && l->f1() == 1.0;
    }
    ok &= std::abs(r.room_iou() - 1.0) < 1e-12;
  }
  const Polygon a = fixtures::rect(0, 0, 40, 30);
  const Polygon b = ensure_clockwise(Polygon({{50, 10}, {100, 10}, {100, 30}, {70, 30}, {70, 70}, {50, 70}}));
  const Floorplan gt{{a, b}, 128, 128};
  const MetricsReport empty = evaluate(Floorplan{{}, 128, 128}, gt, {});
  bool empty_ok = true;
  for (const LevelCounts* l : {&empty.room, &empty.corner, &empty.angle}) {
    empty_ok &= l->recall() == 0.0 && l->precision() == 0.0 && l->f1() == 0.0;
  }
  const MetricsReport half = evaluate(Floorplan{{b}, 128, 128}, gt, {});
  const bool half_ok = half.room.recall() == 0.5 && half.room.precision() == 1.0 && half.room.f1() == 2.0 / 3.0;
  return {ok && empty_ok && half_ok,
          fmt("identity on %zu scenes %s; empty prediction %s; one of two rooms p=%.3f r=%.3f f1=%.4f", scenes,
              ok ? "ok" : "FAILED", empty_ok ? "ok" : "FAILED", half.room.precision(), half.room.recall(), half.room.f1())};
}

// ---------------------------------------------------------------------------
// 7. Loss identities.

Outcome loss_identities() {
  const SynthConfig sc;
  const SceneRecord rec = generate_scene(31, sc);
  const SceneTarget t = make_target(encode_floorplan(rec.gt, 40));
  const std::size_t m = t.rooms() + 2;
  std::vector<double> q(m * 40 * 2, 0.5);
  std::vector<std::size_t> assignment;
  for (std::size_t i = 0; i < t.rooms(); ++i) {
    const std::size_t row = m - 1 - i;
    std::copy(t.coords[i].begin(), t.coords[i].end(), q.begin() + static_cast<long>(row * 80));
    assignment.push_back(row);
  }
  const Tensor queries = Tensor::from({m * 40, 2}, q);
  const MatchResult match = match_rooms(queries.data(), m, t);
  const bool match_ok = match.assignment == assignment;
  const double coord = loss_coord(queries, match, t).item();
  const double angle = loss_angle(queries, match, t).item();
  const double ras = loss_raster(queries, match, t, {}).item();

  const std::vector<Point2> sa{{0, 0}, {20, 0}, {20, 20}, {0, 20}};
  const std::vector<Point2> sb{{40, 0}, {60, 0}, {60, 20}, {40, 20}};
  const RasterSettings rs;  // training defaults
  std::vector<double> flat;
  for (const Point2& p : sa) {
    flat.push_back(p.x);
    flat.push_back(p.y);
  }
  const double soft = soft_raster_l1(Tensor::from({4, 2}, flat), sb, rs).item();
  const double hard = hard_raster_l1(sa, sb, rs);
  const double rel = std::abs(soft - hard) / hard;
  return {match_ok && coord < 1e-9 && angle < 1e-9 && ras < 1e-3 && rel < 0.05,
          fmt("coord %.1e, angle %.1e, raster %.1e; disjoint squares soft %.4f vs hard %.4f (%.2f%%)", coord, angle, ras,
              soft, hard, 100 * rel)};
}

// ---------------------------------------------------------------------------
// Desk-scale models.

ModelConfig desk_model() {
  ModelConfig mc;
  mc.max_rooms = 8;
  mc.vertices = 40;
  mc.d = 64;
  mc.layers = 3;
  return mc;
}

SynthConfig desk_scenes() {
  SynthConfig sc;
  sc.width = sc.height = 128;
  sc.rooms_min = 1;
  sc.rooms_max = 4;
  sc.max_rooms = 8;
  return sc;
}

MetricsReport evaluate_model(const PolyRoomModel& model, const std::vector<TrainingSample>& samples,
                             const std::vector<Floorplan>& gts, QueryInit init) {
  MetricsReport total;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const RoomQueries q0 = initial_queries(samples[i], model.config(), init, 900 + i);
    const DecoderOutput out = model.forward(samples[i].density, q0);
    const VectorFloorplan fp = extract_floorplan(out, q0, {}, gts[i].width, gts[i].height);
    total += evaluate(fp, gts[i], {});
  }
  return total;
}

// 8. Single-sample overfit.

Outcome single_sample_overfit() {
  const auto t0 = Clock::now();
  SynthConfig sc = desk_scenes();
  sc.rooms_min = sc.rooms_max = 2;
  const SceneRecord rec = generate_scene(11, sc);
  const ModelConfig mc = desk_model();
  PolyRoomModel model(mc, 1);
  TrainConfig tc;
  tc.epochs = 500;
  tc.max_steps = 500;
  Trainer trainer(model, tc);
  const std::vector<TrainingSample> data{make_sample(rec, mc.vertices)};
  double last = 0.0;
  trainer.fit(data, [&](const StepLog& s) { last = s.loss; });
  const double final_loss = trainer.evaluate_loss(data[0], 0).total.item();
  const MetricsReport r = evaluate_model(model, data, {rec.gt}, QueryInit::kMasks);
  const double elapsed = seconds_since(t0);
  return {final_loss < 0.02 && r.room.f1() == 1.0 && elapsed < 300.0,
          fmt("%zu steps, last step loss %.4f, final loss %.4f, room F1 %.3f, corner F1 %.3f, %.0f s", trainer.step(), last,
              final_loss, r.room.f1(), r.corner.f1(), elapsed)};
}

// 9 and 10. Desk-scale training runs share one dataset.

struct DeskData {
  std::vector<TrainingSample> train, test, test_degraded;
  std::vector<Floorplan> test_gt;
};

const DeskData& desk_data() {
  static const DeskData data = [] {
    DeskData d;
    const SynthConfig sc = desk_scenes();
    const ModelConfig mc = desk_model();
    for (std::uint64_t s = 0; s < 500; ++s) d.train.push_back(make_sample(generate_scene(s, sc), mc.vertices));
    SynthConfig deg = sc;
    deg.p_drop = 0.05;
    deg.morph_min = deg.morph_max = 2;
    for (std::uint64_t s = 0; s < 50; ++s) {
      const SceneRecord rec = generate_scene(100000 + s, sc);
      d.test.push_back(make_sample(rec, mc.vertices));
      TrainingSample degraded = d.test.back();
      degraded.masks = degrade_masks(rec.masks, 200000 + s, deg);
      d.test_degraded.push_back(std::move(degraded));
      d.test_gt.push_back(rec.gt);
    }
    return d;
  }();
  return data;
}

struct DeskRun {
  MetricsReport clean, degraded;
  double seconds = 0.0, final_loss = 0.0;
  std::size_t steps = 0;
};

std::size_t g_desk_epochs = 4;

DeskRun train_desk(QueryInit init) {
  const auto t0 = Clock::now();
  const DeskData& data = desk_data();
  PolyRoomModel model(desk_model(), 7);
  TrainConfig tc;
  tc.epochs = g_desk_epochs;
  tc.seed = 7;
  tc.init = init;
  Trainer trainer(model, tc);
  DeskRun run;
  double window = 0.0;
  std::size_t in_window = 0;
  trainer.fit(data.train, [&](const StepLog& s) {
    window += s.loss;
    ++in_window;
    if (s.step % 500 == 0) {
      std::cerr << "  [" << (init == QueryInit::kMasks ? "masks" : "random") << "] step " << s.step << " mean loss "
                << window / static_cast<double>(in_window) << " (" << static_cast<int>(seconds_since(t0)) << " s)\n";
      window = 0.0;
      in_window = 0;
    }
    run.final_loss = s.loss;
  });
  run.steps = trainer.step();
  run.clean = evaluate_model(model, data.test, data.test_gt, init);
  if (init == QueryInit::kMasks) run.degraded = evaluate_model(model, data.test_degraded, data.test_gt, init);
  run.seconds = seconds_since(t0);
  return run;
}

const DeskRun& masks_run() {
  static const DeskRun run = train_desk(QueryInit::kMasks);
  return run;
}

Outcome desk_training() {
  const DeskRun& r = masks_run();
  const double room = r.clean.room.f1(), corner = r.clean.corner.f1(), deg = r.degraded.room.f1();
  const bool ok = room >= 0.85 && corner >= 0.60 && room - deg <= 0.10 && r.seconds <= 1800.0;
  return {ok, fmt("%zu steps in %.0f s; room F1 %.3f, corner F1 %.3f, angle F1 %.3f, room IoU %.3f; degraded masks room F1 "
                  "%.3f (drop %.3f)",
                  r.steps, r.seconds, room, corner, r.clean.angle.f1(), r.clean.room_iou(), deg, room - deg)};
}

Outcome init_ablation() {
  const DeskRun& base = masks_run();
  const DeskRun r = train_desk(QueryInit::kRandom);
  const double drop = base.clean.room.f1() - r.clean.room.f1();
  return {drop >= 0.05, fmt("random init room F1 %.3f vs %.3f (drop %.3f), corner F1 %.3f; %zu steps in %.0f s",
                            r.clean.room.f1(), base.clean.room.f1(), drop, r.clean.corner.f1(), r.steps, r.seconds)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::vector<int> only;
  app.add_option("--only", only, "criteria to run (default: all)");
  app.add_option("--desk-epochs", g_desk_epochs, "epochs for the desk-scale runs");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient fidelity", gradient_fidelity},
      {"attention factorization", attention_factorization},
      {"representation round trip", representation_round_trip},
      {"matching oracle", matching_oracle},
      {"extraction identity", extraction_identity},
      {"metric self-test", metric_self_test},
      {"loss identities", loss_identities},
      {"single-sample overfit", single_sample_overfit},
      {"desk-scale training", desk_training},
      {"initialization ablation", init_ablation},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << ". " << criteria[i].first << ": " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
