#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "osim/cli.hpp"
#include "support/synth.hpp"

using namespace osim;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "osim");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

void write(const fs::path& p, const std::string& s) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << s;
}

// Red and green blocks the tiny ONNX model detects as cup / person.
Image two_blocks(float damage) {
  Image img(64, 64, 3, 0.0f);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) img.at(x, y, 0) = 1.0f - damage * ((x + y) % 2);
  for (int y = 32; y < 64; ++y)
    for (int x = 32; x < 64; ++x) img.at(x, y, 1) = 1.0f;
  return img;
}

fs::path tiny_config(const fs::path& dir) {
  const fs::path p = dir / "tiny.json";
  write(p, R"({
    // tiny generated detector
    "backend": "onnx",
    "model": ")" + std::string(OSIM_TEST_DATA) + R"(/tiny_yolox.onnx",
    "input_size": [64, 64],
    "class_names": ["person", "cup"],
    "saliency": "uniform"
  })");
  return p;
}

}  // namespace

TEST(Config, PrecedenceFileEnvFlag) {
  const auto dir = osim::testing::fresh_dir("cfg");
  write(dir / "c.json", R"({ /* comment */ "conf": 0.5, "layer": "x", "parallel": 3 })");
  RunConfig c;
  load_config_file(c, dir / "c.json");
  EXPECT_EQ(c.model.confidence_threshold, 0.5);
  EXPECT_EQ(c.parallelism, 3);
  apply_env_overrides(c, [](const char* k) -> std::optional<std::string> {
    if (std::string(k) == "OSIM_LAYER") return "neck.p5";
    if (std::string(k) == "OSIM_EXCLUDE") return "colmap,foo";
    return std::nullopt;
  });
  EXPECT_EQ(c.model.feature_layer, "neck.p5");
  EXPECT_EQ(c.exclude, (std::vector<std::string>{"colmap", "foo"}));
  EXPECT_EQ(c.model.confidence_threshold, 0.5);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  RunConfig c;
  EXPECT_THROW(apply_config_json(c, json{{"confidence", 0.3}}), Error);
  EXPECT_THROW(apply_config_json(c, json{{"conf", "high"}}), Error);
  EXPECT_THROW(apply_env_overrides(c, [](const char* k) -> std::optional<std::string> {
                 return std::string(k) == "OSIM_CONF" ? std::optional<std::string>("abc") : std::nullopt;
               }),
               Error);
  c = RunConfig{};
  c.parallelism = 0;
  EXPECT_THROW(c.validate(false), Error);
}

TEST(Config, ExampleConfigParses) {
  RunConfig c;
  load_config_file(c, fs::path(OSIM_SOURCE_DIR) / "tools" / "osim.example.jsonc");
  EXPECT_EQ(c.model.confidence_threshold, 0.35);
  EXPECT_EQ(c.model.feature_layer, "backbone.dark5");
}

TEST(Cli, EvaluateOnnxIdentityAndDamage) {
  const auto dir = osim::testing::fresh_dir("cli_onnx");
  for (int i = 0; i < 2; ++i) {
    io::save_image(dir / "same" / "ref" / (std::to_string(i) + ".png"), two_blocks(0));
    io::save_image(dir / "same" / "test" / (std::to_string(i) + ".png"), two_blocks(0));
    io::save_image(dir / "hurt" / "ref" / (std::to_string(i) + ".png"), two_blocks(0));
    io::save_image(dir / "hurt" / "test" / (std::to_string(i) + ".png"), two_blocks(0.9f));
  }
  const auto cfg = tiny_config(dir).string();
  auto r = run_cli({"evaluate", "--config", cfg, "--scene", (dir / "same").string(), "--scene",
                    (dir / "hurt").string(), "--out", (dir / "out").string(), "--method", "m", "--no-timestamp"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto same = report_from_json(json::parse(io::read_text(dir / "out" / "same.json")));
  const auto hurt = report_from_json(json::parse(io::read_text(dir / "out" / "hurt.json")));
  EXPECT_NEAR(same.osim, 1.0, 1e-6);
  EXPECT_TRUE(std::isinf(same.whole_image->psnr));
  EXPECT_LT(hurt.osim, same.osim);
  EXPECT_EQ(same.per_class.size(), 2u);
  EXPECT_FALSE(json::parse(io::read_text(dir / "out" / "same.json")).contains("generated_at"));
}

TEST(Cli, BlankSceneExitsTwo) {
  const auto dir = osim::testing::fresh_dir("cli_blank");
  io::save_image(dir / "blank" / "ref" / "0.png", Image(64, 64, 3, 0.0f));
  io::save_image(dir / "blank" / "test" / "0.png", Image(64, 64, 3, 0.0f));
  const auto r = run_cli({"evaluate", "--config", tiny_config(dir).string(), "--scene", (dir / "blank").string(),
                          "--out", (dir / "out").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("NoObjectsDetected"), std::string::npos);
}

TEST(Cli, ConfigAndIoErrorsExitOne) {
  const auto dir = osim::testing::fresh_dir("cli_err");
  const auto cfg = tiny_config(dir).string();
  EXPECT_EQ(run_cli({"evaluate", "--config", cfg, "--scene", (dir / "nope").string()}).code, 1);
  EXPECT_EQ(run_cli({"degrade", "--config", cfg, "--scene", (dir / "nope").string()}).code, 1);
  EXPECT_EQ(run_cli({"evaluate", "--config", cfg, "--scene", dir.string(), "--layer", "backbone.dark9"}).code, 1);
  EXPECT_EQ(run_cli({"evaluate", "--bogus-flag"}).code, 1);
  EXPECT_EQ(run_cli({"evaluate", "--config", cfg, "--scene", dir.string(), "--saliency", "x"}).code, 1);
  // unequal view counts
  io::save_image(dir / "s" / "ref" / "0.png", two_blocks(0));
  io::save_image(dir / "s" / "ref" / "1.png", two_blocks(0));
  io::save_image(dir / "s" / "test" / "0.png", two_blocks(0));
  const auto r = run_cli({"evaluate", "--config", cfg, "--scene", (dir / "s").string(), "--out", dir.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("PairingMismatch"), std::string::npos);
}

TEST(Cli, DegradeWritesSeries) {
  const auto dir = osim::testing::fresh_dir("cli_degrade");
  const auto scene = osim::testing::make_object_scene(128, 128, {{0, {0, 0, 31, 31}}, {1, {64, 32, 127, 95}}}, 3);
  osim::testing::write_cells_fixture(dir / "fx", scene.image, scene.detections, {"a", "b"});
  io::save_image(dir / "sc" / "ref" / "0.png", scene.image);
  io::save_image(dir / "sc" / "test" / "0.png", scene.image);
  auto r = run_cli({"degrade", "--backend", "fixture", "--model", (dir / "fx").string(), "--scene",
                    (dir / "sc").string(), "--sigma", "5", "--out", (dir / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = io::read_text(dir / "out" / "sc" / "degrade_osim.csv");
  EXPECT_EQ(csv.rfind("view,step,blurred_objects,raw,normalized\n", 0), 0u);
  EXPECT_NE(csv.find("0,3,all,"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "out" / "sc" / "degrade_psnr.csv"));

  // sigma 0: every step equals step 0
  r = run_cli({"degrade", "--backend", "fixture", "--model", (dir / "fx").string(), "--scene", (dir / "sc").string(),
               "--sigma", "0", "--out", (dir / "out0").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(io::read_text(dir / "out0" / "sc" / "degrade.json"));
  for (const auto& v : j["views"][0]["series"]["osim"]["raw"]) EXPECT_EQ(v.get<double>(), 1.0);
  EXPECT_EQ(run_cli({"degrade", "--backend", "fixture", "--model", (dir / "fx").string(), "--scene",
                     (dir / "sc").string(), "--order", "random"})
                .code,
            1);
}

TEST(Cli, CorrelateAndLeaderboard) {
  const auto dir = osim::testing::fresh_dir("cli_corr");
  const std::vector<std::pair<std::string, double>> models = {{"a", 0.2}, {"b", 0.5}, {"c", 0.9}, {"colmap", 0.1}};
  std::string mos = "scene,model,mos\n";
  for (const auto& [m, v] : models) {
    EvaluationReport r;
    r.scene = "garden";
    r.method = m;
    r.osim = v;
    r.per_class = {{0, v, 1, 1.0}};
    r.whole_image = BaselineScores{20 + 10 * v, v, v};
    r.external["lpips"] = 1 - v;
    io::write_atomic(dir / "reports" / (m + ".json"), report_to_json(r).dump());
    mos += "garden," + m + "," + std::to_string(1 + 4 * v) + "\n";
  }
  write(dir / "mos.csv", mos);
  auto r = run_cli({"correlate", "--mos", (dir / "mos.csv").string(), "--reports", (dir / "reports/*.json").string(),
                    "--exclude", "colmap", "--out", (dir / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("osim,1.000000000,1.000000000,1"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("lpips,1.000000000,1.000000000,1"), std::string::npos) << r.out;

  r = run_cli({"leaderboard", "--reports", (dir / "reports/*.json").string(), "--mos", (dir / "mos.csv").string(),
               "--out", (dir / "lb").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json lb = json::parse(io::read_text(dir / "lb" / "leaderboard.json"));
  ASSERT_EQ(lb.size(), 4u);
  EXPECT_EQ(lb[2]["method"], "c");
  EXPECT_NEAR(lb[2]["psnr"].get<double>(), 1.0, 1e-12);
  EXPECT_NEAR(lb[2]["mos"].get<double>(), 0.9, 1e-6);
  EXPECT_NEAR(lb[2]["lpips"].get<double>(), 0.9, 1e-12);

  EXPECT_EQ(run_cli({"correlate", "--mos", (dir / "mos.csv").string(), "--reports", (dir / "none*.json").string()}).code,
            1);
}

TEST(Cli, SplitAndPoses) {
  const auto dir = osim::testing::fresh_dir("cli_split");
  for (int i = 0; i < 10; ++i) io::save_image(dir / "imgs" / (std::to_string(i) + ".png"), Image(2, 2, 3, 0.1f * i));
  auto r = run_cli({"split", "--images", (dir / "imgs").string(), "--n", "8"});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out.rfind("test\t0.png\ntest\t8.png\ntrain\t1.png\n", 0), 0u);
  r = run_cli({"poses", "--tau", "90"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.err.find("6 poses"), std::string::npos);
}
