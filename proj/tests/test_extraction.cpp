#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "polyroom/extraction.hpp"
#include "polyroom/representation.hpp"
#include "test_support.hpp"

using namespace polyroom;
namespace fs = std::filesystem;

namespace {

std::vector<double> label_probs(const RoomSequence& s) {
  std::vector<double> p;
  for (const LabeledVertex& v : s.vertices) p.push_back(static_cast<double>(v.label));
  return p;
}

// Decoder output that reproduces the given rooms exactly, with confident logits.
DecoderOutput perfect_output(const SampledFloorplan& sf, std::size_t m, RoomQueries& meta) {
  const std::size_t n = sf.rooms.front().size();
  meta = RoomQueries{m, n, std::vector<double>(m * n * 2, 0.5), sf.rooms.size()};
  std::vector<double> logits(m * n * 2);
  for (std::size_t r = 0; r < m * n; ++r) {
    logits[2 * r] = 20.0;
    logits[2 * r + 1] = -20.0;
  }
  for (std::size_t i = 0; i < sf.rooms.size(); ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const LabeledVertex& v = sf.rooms[i].vertices[j];
      meta.coords[(i * n + j) * 2] = v.p.x / sf.width;
      meta.coords[(i * n + j) * 2 + 1] = v.p.y / sf.height;
      if (v.label == 1) std::swap(logits[(i * n + j) * 2], logits[(i * n + j) * 2 + 1]);
    }
  }
  DecoderOutput out;
  out.queries.push_back(ag::Tensor::from({m * n, 2}, meta.coords));
  out.logits = ag::Tensor::from({m * n, 2}, logits);
  return out;
}

}  // namespace

TEST(SelectVertices, RightAngleKeptSpikeDropped) {
  const ExtractionConfig cfg;
  // Vertex 1 is a right angle with probability 0.
  const std::vector<Point2> right{{0, 0}, {10, 0}, {10, 10}, {0, 10}};
  EXPECT_EQ(select_vertices(std::vector<double>{0, 0, 0, 0}, right, cfg), (std::vector<std::size_t>{0, 1, 2, 3}));

  // A 20 degree spike at vertex 1: |cos 20| = 0.94 >= sqrt(3)/2.
  const double a = 20.0 * std::numbers::pi / 180.0;
  const std::vector<Point2> spike{{-10, 0}, {0, 0}, {-10 * std::cos(a), 10 * std::sin(a)}, {-20, 5}};
  EXPECT_NEAR(std::abs(angle_cosine(spike, 1)), 0.9397, 1e-4);
  const auto sel = select_vertices(std::vector<double>{0, 0, 0, 0}, spike, cfg);
  EXPECT_EQ(std::count(sel.begin(), sel.end(), 1u), 0);
  // The probability alone still selects it.
  const auto sel2 = select_vertices(std::vector<double>{0, 0.5, 0, 0}, spike, cfg);
  EXPECT_EQ(std::count(sel2.begin(), sel2.end(), 1u), 1);
}

TEST(SelectVertices, CollinearDroppedAndDegenerateByProbability) {
  const ExtractionConfig cfg;
  const std::vector<Point2> line{{0, 0}, {5, 0}, {10, 0}, {10, 10}, {0, 10}};
  EXPECT_EQ(select_vertices(std::vector<double>{0, 0, 0, 0, 0}, line, cfg), (std::vector<std::size_t>{0, 2, 3, 4}));
  const std::vector<Point2> dup{{0, 0}, {10, 0}, {10, 0}, {10, 10}, {0, 10}};
  EXPECT_EQ(select_vertices(std::vector<double>{0, 0, 0, 0, 0}, dup, cfg), (std::vector<std::size_t>{0, 3, 4}));
  EXPECT_EQ(select_vertices(std::vector<double>{0, 0.9, 0, 0, 0}, dup, cfg), (std::vector<std::size_t>{0, 1, 3, 4}));
  EXPECT_THROW(select_vertices(std::vector<double>{0, 0}, dup, cfg), Error);
}

TEST(SelectVertices, PerfectSequenceProperty) {
  std::mt19937_64 rng(1);
  const ExtractionConfig cfg;
  for (int i = 0; i < 300; ++i) {
    const Polygon p = fixtures::random_rectilinear(rng);
    const RoomSequence s = encode_room(p, 40);
    const auto sel = select_vertices(label_probs(s), s.points(), cfg);
    for (std::size_t j = 0; j < s.size(); ++j) {
      const bool selected = std::binary_search(sel.begin(), sel.end(), j);
      if (s.vertices[j].label == 1) {
        EXPECT_TRUE(selected);
      }
      const double c = angle_cosine(s.points(), j);
      if (s.vertices[j].label == 0 && std::abs(c + 1.0) < 1e-9) {
        EXPECT_FALSE(selected);
      }
    }
  }
}

TEST(ExtractRoom, GtIdentityOnSyntheticRooms) {
  SynthConfig sc;  // 256 x 256, the frame dp_eps is quoted in
  const ExtractionConfig cfg;
  std::size_t rooms = 0, exact = 0;
  for (std::uint64_t seed = 0; rooms < 500; ++seed) {
    const SceneRecord rec = generate_scene(seed, sc);
    for (const Polygon& gt : rec.gt.rooms) {
      const RoomSequence s = encode_room(gt, kDefaultSamples);
      const Polygon got = extract_room(label_probs(s), s.points(), cfg, cfg.dp_eps);
      const Polygon want = normalize_start(ensure_clockwise(gt));
      exact += got == want;
      EXPECT_EQ(got, sequence_to_polygon(s));
      ++rooms;
    }
  }
  EXPECT_EQ(exact, rooms);
}

TEST(ExtractRoom, FallbackUsesWholeSequence) {
  std::vector<Point2> circle;
  for (int k = 0; k < 40; ++k) {
    const double t = 2 * std::numbers::pi * k / 40;
    circle.push_back({100 + 50 * std::cos(t), 100 + 50 * std::sin(t)});
  }
  const std::vector<double> zeros(40, 0.0);
  EXPECT_TRUE(select_vertices(zeros, circle, {}).empty());
  const Polygon p = extract_room(zeros, circle, {}, 0.0);
  EXPECT_EQ(p.size(), 40u);
  EXPECT_LT(extract_room(zeros, circle, {}, 4.0).size(), 40u);
}

TEST(ExtractRoom, MonotoneInEpsAndSubsetOfInput) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> prob(0.0, 0.05);
  for (int i = 0; i < 100; ++i) {
    const Polygon star = fixtures::random_star(rng, 40, {128, 128}, 40, 90);
    const std::vector<Point2> coords = star.vertices();
    std::vector<double> probs(coords.size());
    for (double& p : probs) p = prob(rng);
    const auto sel = select_vertices(probs, coords, {});
    std::size_t last = coords.size() + 1;
    for (double eps : {0.0, 1.0, 2.0, 4.0, 8.0, 16.0}) {
      std::vector<double> kept;
      const Polygon p = extract_room(probs, coords, {}, eps, &kept);
      EXPECT_LE(p.size(), last);
      last = p.size();
      EXPECT_EQ(kept.size(), p.size());
      for (const Point2& v : p) {
        const auto it = std::find(coords.begin(), coords.end(), v);
        ASSERT_NE(it, coords.end());
        if (sel.size() >= 3) {
          EXPECT_TRUE(std::binary_search(sel.begin(), sel.end(), static_cast<std::size_t>(it - coords.begin())));
        }
      }
    }
  }
}

TEST(ExtractFloorplan, PerfectOutputReproducesScenes) {
  SynthConfig sc;
  sc.width = sc.height = 128;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const SceneRecord rec = generate_scene(seed, sc);
    const SampledFloorplan sf = encode_floorplan(rec.gt, 40);
    RoomQueries meta;
    const DecoderOutput out = perfect_output(sf, 6, meta);
    const VectorFloorplan fp = extract_floorplan(out, meta, {}, 128, 128);
    ASSERT_EQ(fp.rooms.size(), rec.gt.rooms.size());
    EXPECT_TRUE(fp.dropped.empty());
    EXPECT_EQ(fp.non_simple, 0u);
    for (std::size_t i = 0; i < fp.rooms.size(); ++i) {
      EXPECT_EQ(fp.rooms[i], normalize_start(ensure_clockwise(rec.gt.rooms[i])));
      EXPECT_EQ(fp.source_index[i], i);
      for (double p : fp.corner_probability[i]) EXPECT_GT(p, 0.99);
    }
  }
}

TEST(ExtractFloorplan, NoValidRowsAndDroppedRooms) {
  const SceneRecord rec = generate_scene(3, SynthConfig{});
  const SampledFloorplan sf = encode_floorplan(rec.gt, 40);
  RoomQueries meta;
  DecoderOutput out = perfect_output(sf, 6, meta);
  RoomQueries none = meta;
  none.valid_count = 0;
  const VectorFloorplan empty = extract_floorplan(out, none, {}, 256, 256);
  EXPECT_TRUE(empty.rooms.empty());
  EXPECT_TRUE(empty.dropped.empty());

  // Row 0 collapses to a single point.
  std::vector<double> q(meta.coords);
  for (std::size_t j = 0; j < 40; ++j) {
    q[2 * j] = 0.25;
    q[2 * j + 1] = 0.25;
  }
  out.queries.back() = ag::Tensor::from({6 * 40, 2}, q);
  const VectorFloorplan fp = extract_floorplan(out, meta, {}, 256, 256);
  ASSERT_EQ(fp.dropped.size(), 1u);
  EXPECT_EQ(fp.dropped[0].source, 0u);
  EXPECT_FALSE(fp.dropped[0].reason.empty());
  EXPECT_EQ(fp.rooms.size(), rec.gt.rooms.size() - 1);
}

TEST(ExtractFloorplan, NonSimpleRoomsAreCounted) {
  // A bow tie survives selection and DP.
  const std::vector<Point2> bow{{0, 0}, {100, 100}, {100, 0}, {0, 100}};
  RoomQueries meta{1, 4, {}, 1};
  for (const Point2& p : bow) {
    meta.coords.push_back(p.x / 200);
    meta.coords.push_back(p.y / 200);
  }
  DecoderOutput out;
  out.queries.push_back(ag::Tensor::from({4, 2}, meta.coords));
  out.logits = ag::Tensor::from({4, 2}, {-5, 5, -5, 5, -5, 5, -5, 5});
  const VectorFloorplan fp = extract_floorplan(out, meta, {}, 200, 200);
  EXPECT_EQ(fp.rooms.size(), 1u);
  EXPECT_EQ(fp.non_simple, 1u);
}

TEST(ExtractionConfig, Validation) {
  ExtractionConfig c;
  EXPECT_NO_THROW(c.validate());
  c.t_pro = 1.5;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.t_ang = -0.1;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.dp_eps = -1;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Export, JsonRoundTripAndSvg) {
  const fs::path dir = fs::temp_directory_path() / "polyroom_export_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const SceneRecord rec = generate_scene(5, SynthConfig{});
  const SampledFloorplan sf = encode_floorplan(rec.gt, 40);
  RoomQueries meta;
  const VectorFloorplan fp = extract_floorplan(perfect_output(sf, 6, meta), meta, {}, 256, 256);

  export_json(fp, "scene_x", dir / "pred.json");
  std::string id;
  const Floorplan back = read_floorplan_json(dir / "pred.json", &id);
  EXPECT_EQ(id, "scene_x");
  EXPECT_EQ(back, fp.to_floorplan());
  for (std::size_t i = 0; i < back.rooms.size(); ++i) EXPECT_EQ(back.rooms[i].size(), fp.rooms[i].size());

  const std::string svg = to_svg(fp, &rec.density);
  EXPECT_EQ(svg.rfind("<?xml", 0), 0u);
  EXPECT_NE(svg.find("data:image/bmp;base64,Qk"), std::string::npos);
  std::size_t paths = 0;
  for (std::size_t pos = svg.find("<path"); pos != std::string::npos; pos = svg.find("<path", pos + 1)) ++paths;
  EXPECT_EQ(paths, fp.rooms.size());

  VectorFloorplan none;
  none.width = none.height = 64;
  const std::string empty = to_svg(none);
  EXPECT_NE(empty.find("<svg"), std::string::npos);
  EXPECT_NE(empty.find("</svg>"), std::string::npos);
  EXPECT_EQ(empty.find("<path"), std::string::npos);
  export_svg(none, dir / "empty.svg");
  EXPECT_TRUE(fs::exists(dir / "empty.svg"));
  EXPECT_THROW(export_json(fp, "x", dir / "missing" / "p.json"), Error);
  fs::remove_all(dir);
}
