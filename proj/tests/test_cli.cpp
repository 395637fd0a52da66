#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "polyroom_cli_test";

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + std::string(POLYROOM_CLI) + " " + args + " > " + (kRoot / "last.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string last_log() { return slurp(kRoot / "last.log"); }

const std::string kModel = "--max-rooms 4 --vertices 24 --d 16 --layers 1 --heads 2 --points 2 --ffn-dim 16 --raster-resolution 16";

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    ASSERT_EQ(run("synth --out " + (kRoot / "data").string() + " --scenes 3 --width 64 --height 64 --rooms-max 2 --max-rooms 4 --seed 5"), 0)
        << last_log();
  }
  static void TearDownTestSuite() { fs::remove_all(kRoot); }
  static std::string data() { return (kRoot / "data").string(); }
};

}  // namespace

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("bogus"), 1);
  EXPECT_EQ(run("synth"), 1);  // --out is required
  EXPECT_EQ(run("synth --out x --scenes notanumber"), 1);
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run("synth --out " + (kRoot / "bad").string() + " --rooms-max 9 --max-rooms 4"), 1);
}

TEST_F(Cli, SynthIsDeterministic) {
  const fs::path a = kRoot / "det_a", b = kRoot / "det_b";
  ASSERT_EQ(run("synth --out " + a.string() + " --scenes 2 --width 64 --height 64 --seed 9"), 0);
  ASSERT_EQ(run("synth --out " + b.string() + " --scenes 2 --width 64 --height 64 --seed 9"), 0);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), a);
    if (rel == "run_config.json") continue;  // echoes --out
    EXPECT_EQ(slurp(e.path()), slurp(b / rel)) << rel;
    ++files;
  }
  EXPECT_GT(files, 4u);
  EXPECT_TRUE(fs::exists(a / "index.json"));
}

TEST_F(Cli, ConfigFileAndPrecedence) {
  const fs::path cfg = kRoot / "synth.json";
  std::ofstream(cfg) << R"({"scenes": 2, "width": 64, "height": 64, "seed": 3})";
  const fs::path out = kRoot / "cfg_out";
  ASSERT_EQ(run("synth --config " + cfg.string() + " --out " + out.string() + " --scenes 1"), 0) << last_log();
  const json echo = json::parse(slurp(out / "run_config.json"));
  EXPECT_EQ(echo["scenes"], 1);  // flag beats file
  EXPECT_EQ(echo["seed"], 3);    // file beats default
  EXPECT_EQ(echo["rooms_max"], 4);

  std::ofstream(kRoot / "unknown.json") << R"({"scenes": 2, "colour": "red"})";
  EXPECT_EQ(run("synth --config " + (kRoot / "unknown.json").string() + " --out " + (kRoot / "u").string()), 1);
  EXPECT_NE(last_log().find("colour"), std::string::npos);
  std::ofstream(kRoot / "wrongtype.json") << R"({"scenes": "two"})";
  EXPECT_EQ(run("synth --config " + (kRoot / "wrongtype.json").string() + " --out " + (kRoot / "w").string()), 1);
  std::ofstream(kRoot / "broken.json") << "{";
  EXPECT_EQ(run("synth --config " + (kRoot / "broken.json").string() + " --out " + (kRoot / "b").string()), 1);
}

TEST_F(Cli, TrainInferEvalAndResume) {
  const fs::path run_dir = kRoot / "run";
  ASSERT_EQ(run("train --data " + data() + " --out " + run_dir.string() + " " + kModel + " --epochs 1 --max-steps 2"), 0)
      << last_log();
  EXPECT_TRUE(fs::exists(run_dir / "model.json"));
  EXPECT_TRUE(fs::exists(run_dir / "model.bin"));
  auto log_lines = [&] {
    std::ifstream in(run_dir / "train_log.jsonl");
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) {
      const json j = json::parse(line);
      EXPECT_TRUE(j.contains("loss"));
      EXPECT_TRUE(j.contains("ras"));
      ++n;
    }
    return n;
  };
  EXPECT_EQ(log_lines(), 2u);

  ASSERT_EQ(run("train --data " + data() + " --out " + run_dir.string() + " " + kModel + " --epochs 2 --max-steps 4 --resume"), 0)
      << last_log();
  EXPECT_EQ(log_lines(), 4u);
  EXPECT_EQ(json::parse(slurp(run_dir / "model.json"))["step"], 4);
  // A different architecture cannot resume this run.
  EXPECT_EQ(run("train --data " + data() + " --out " + run_dir.string() + " " + kModel + " --d 32 --resume"), 1);

  const fs::path pred = kRoot / "pred";
  ASSERT_EQ(run("infer --model " + run_dir.string() + " --scene " + data() + " --out " + pred.string() + " --svg --dump-queries"), 0)
      << last_log();
  std::size_t jsons = 0;
  for (const auto& e : fs::directory_iterator(pred)) {
    const std::string name = e.path().filename().string();
    if (name.ends_with("_queries.json")) {
      const json q = json::parse(slurp(e.path()));
      EXPECT_EQ(q["queries"].size(), 2u);  // Q_0 and Q_1
    } else if (e.path().extension() == ".json" && name != "run_config.json") {
      ++jsons;
    }
  }
  EXPECT_EQ(jsons, 3u);

  ASSERT_EQ(run("eval --pred " + pred.string() + " --gt " + data()), 0) << last_log();
  const json m = json::parse(slurp(pred / "metrics.json"));
  for (const char* level : {"room", "corner", "angle"}) {
    EXPECT_GE(m[level]["f1"].get<double>(), 0.0);
    EXPECT_LE(m[level]["f1"].get<double>(), 1.0);
  }
  EXPECT_NE(last_log().find("room"), std::string::npos);

  // Same inputs, same bytes.
  const fs::path pred2 = kRoot / "pred2";
  ASSERT_EQ(run("infer --model " + run_dir.string() + " --scene " + data() + " --out " + pred2.string(), "POLYROOM_THREADS=1"), 0);
  for (const auto& e : fs::directory_iterator(pred2)) {
    if (e.path().filename() == "run_config.json") continue;
    EXPECT_EQ(slurp(e.path()), slurp(pred / e.path().filename())) << e.path();
  }
  EXPECT_EQ(run("infer --model " + run_dir.string() + " --scene " + data() + " --out " + pred2.string(), "POLYROOM_THREADS=zero"), 1);
}

TEST_F(Cli, EvalGtAgainstItselfAndCoverage) {
  ASSERT_EQ(run("eval --pred " + data() + " --gt " + data() + " --out " + (kRoot / "self.json").string()), 0) << last_log();
  const json m = json::parse(slurp(kRoot / "self.json"));
  for (const char* level : {"room", "corner", "angle"}) EXPECT_EQ(m[level]["f1"].get<double>(), 1.0);

  // A prediction directory missing one scene is a data error.
  const fs::path partial = kRoot / "partial";
  fs::create_directories(partial);
  std::ifstream index(fs::path(data()) / "index.json");
  const json ids = json::parse(index);
  const std::string first = ids["scenes"][0].get<std::string>();
  fs::copy_file(fs::path(data()) / first / "scene.json", partial / (first + ".json"));
  EXPECT_EQ(run("eval --pred " + partial.string() + " --gt " + data()), 2);
  EXPECT_NE(last_log().find("prediction"), std::string::npos);
}

TEST_F(Cli, MissingInputsAreDataErrors) {
  EXPECT_EQ(run("train --data " + (kRoot / "nowhere").string() + " --out " + (kRoot / "r2").string()), 2);
  EXPECT_EQ(run("infer --model " + (kRoot / "nowhere").string() + " --scene " + data() + " --out " + (kRoot / "p3").string()), 2);
}
