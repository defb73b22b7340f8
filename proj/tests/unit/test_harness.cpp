#include <gtest/gtest.h>

#include <set>

#include "osim/osim.hpp"
#include "support/oracles.hpp"
#include "support/synth.hpp"

using namespace osim;
using osim::testing::Rng;

TEST(Split, EveryNth) {
  std::vector<int> items(10);
  std::iota(items.begin(), items.end(), 0);
  const auto s = split_dataset(items, {8});
  EXPECT_EQ(s.test, (std::vector<int>{0, 8}));
  EXPECT_EQ(s.train.size(), 8u);
  const auto big = split_dataset(items, {50});
  EXPECT_EQ(big.test, (std::vector<int>{0}));
  const auto one = split_dataset(std::vector<int>{7}, {2});
  EXPECT_TRUE(one.train.empty());
  EXPECT_FALSE(one.warnings.empty());
  EXPECT_THROW(split_dataset(items, {1}), Error);
}

TEST(Split, PartitionProperty) {
  Rng rng(41);
  for (int t = 0; t < 50; ++t) {
    std::vector<int> items(static_cast<std::size_t>(rng.range(1, 60)));
    std::iota(items.begin(), items.end(), 0);
    const auto s = split_dataset(items, {rng.range(2, 12)});
    std::set<int> all(s.train.begin(), s.train.end());
    for (int x : s.test) EXPECT_TRUE(all.insert(x).second);
    EXPECT_EQ(all.size(), items.size());
  }
}

TEST(Poses, SmallGrids) {
  const auto p = pose_grid({90, -90, 90, true});
  EXPECT_EQ(p, (std::vector<Pose>{{-90, 0}, {0, 0}, {0, 90}, {0, 180}, {0, 270}, {90, 0}}));
  EXPECT_EQ(pose_grid({180, 0, 0, true}).size(), 2u);
  EXPECT_THROW(pose_grid({7, -90, 90, true}), Error);
}

TEST(Poses, FifteenDegreeGridCount) {
  // 13 elevation rows; 11 interior rows of 24 azimuths plus one pose per pole
  EXPECT_EQ(pose_grid({}).size(), 11u * 24u + 2u);
  EXPECT_EQ(pose_grid({15, -90, 90, false}).size(), 13u * 24u);
  const auto p = pose_grid({});
  std::set<std::pair<double, double>> uniq;
  for (const auto& q : p) uniq.insert({q.elevation, q.azimuth});
  EXPECT_EQ(uniq.size(), p.size());
}

TEST(Degradation, PlanOrderByAreaThenCorner) {
  const auto plan = make_degradation_plan({{10, 0, 19, 9}, {0, 0, 4, 4}, {0, 5, 9, 14}, {5, 5, 9, 9}}, 5.0);
  EXPECT_EQ(plan.source_index, (std::vector<int>{1, 3, 2, 0}));
  EXPECT_EQ(plan.full_image_step(), 5);
}

TEST(Degradation, LocalityAndAnchors) {
  Rng rng(42);
  const Image img = osim::testing::random_image(40, 30, 3, rng);
  const auto plan = make_degradation_plan({{5, 5, 14, 14}, {20, 10, 35, 25}}, 2.0);
  EXPECT_EQ(apply_object_blur(img, plan, 0), img);
  const Image one = apply_object_blur(img, plan, 1);
  const Image blurred = gaussian_blur(img, 2.0);
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 40; ++x)
      for (int c = 0; c < 3; ++c) {
        if (PixelBox{5, 5, 14, 14}.contains(x, y))
          EXPECT_EQ(one.at(x, y, c), blurred.at(x, y, c));
        else
          EXPECT_EQ(one.at(x, y, c), img.at(x, y, c));
      }
  EXPECT_EQ(apply_object_blur(img, plan, 3), blurred);
  EXPECT_THROW(apply_object_blur(img, plan, 4), Error);
  EXPECT_THROW(apply_object_blur(img, plan, -1), Error);
}

TEST(Degradation, RepeatableStepApplication) {
  Rng rng(43);
  const Image img = osim::testing::random_image(32, 32, 3, rng);
  const auto plan = make_degradation_plan({{0, 0, 7, 7}, {10, 10, 25, 25}, {3, 20, 12, 30}}, 1.5);
  for (int k = 0; k <= plan.full_image_step(); ++k)
    EXPECT_EQ(apply_object_blur(img, plan, k), apply_object_blur(img, plan, k));
}

TEST(Degradation, ZeroSigmaIsNoOp) {
  Rng rng(44);
  const Image img = osim::testing::random_image(16, 16, 3, rng);
  const auto plan = make_degradation_plan({{0, 0, 7, 7}}, 0.0);
  for (int k = 0; k <= plan.full_image_step(); ++k) EXPECT_EQ(apply_object_blur(img, plan, k), img);
}

TEST(Degradation, StudyOnSyntheticSceneIsMonotone) {
  const auto scene = osim::testing::make_object_scene(
      128, 128, {{0, {0, 0, 31, 31}}, {1, {64, 32, 127, 95}}, {0, {32, 96, 63, 127}}}, 7);
  const auto dir = osim::testing::fresh_dir("study_fixture");
  osim::testing::write_cells_fixture(dir, scene.image, scene.detections, {"a", "b"});
  FixtureBackend be(dir);
  EvaluationOptions opt;
  const auto st = run_degradation_study(scene.image, be, opt, 5.0);
  const auto& o = st.get("osim").normalized;
  ASSERT_EQ(o.size(), 5u);
  EXPECT_NEAR(o.front(), 1.0, 1e-12);
  EXPECT_NEAR(o.back(), 0.0, 1e-12);
  for (std::size_t k = 1; k < o.size(); ++k) EXPECT_LE(o[k], o[k - 1] + 0.01) << "step " << k;
  EXPECT_EQ(st.get("psnr").normalized.front(), 1.0);  // +inf anchor
}

TEST(Normalize, AnchorsAndHandValue) {
  EXPECT_EQ(normalize_series({30, 10, 20}, 30, 10), (std::vector<double>{1.0, 0.0, 0.5}));
  EXPECT_THROW(normalize_series({1}, 3, 3), Error);
}

TEST(Normalize, RoundTrip) {
  Rng rng(45);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> raw;
    for (int i = 0; i < 10; ++i) raw.push_back(rng.uniform(-50, 50));
    const double best = rng.uniform(0, 100), full = rng.uniform(-100, 0);
    const auto back = denormalize_series(normalize_series(raw, best, full), best, full);
    for (std::size_t i = 0; i < raw.size(); ++i) EXPECT_NEAR(back[i], raw[i], 1e-12);
  }
}

TEST(Normalize, LowerIsBetterCurve) {
  const auto s = normalize_degradation_curve("lpips", {0.0, 0.2, 0.5}, false);
  EXPECT_NEAR(s.normalized[1], 0.6, 1e-12);
}

TEST(Leaderboard, ColumnRules) {
  const auto p = normalize_for_leaderboard("psnr", {20, 25, 30});
  EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 5.0 / 6.0, 1e-15);
  EXPECT_EQ(p[2], 1.0);
  EXPECT_EQ(normalize_for_leaderboard("mos", {5.0, 1.0}), (std::vector<double>{1.0, 0.0}));
  EXPECT_EQ(normalize_for_leaderboard("lpips", {0.25}), (std::vector<double>{0.75}));
  EXPECT_EQ(normalize_for_leaderboard("osim", {0.3}), (std::vector<double>{0.3}));
  EXPECT_THROW(normalize_for_leaderboard("bogus", {1.0}), Error);
}

TEST(Leaderboard, RulesAreData) {
  const auto rules = leaderboard_rules_from_json(json{{"bogus", "one_minus"}, {"psnr", "identity"}});
  EXPECT_EQ(normalize_for_leaderboard("bogus", {0.1}, rules)[0], 0.9);
  EXPECT_EQ(normalize_for_leaderboard("psnr", {20}, rules)[0], 20);
  EXPECT_THROW(leaderboard_rules_from_json(json{{"x", "nope"}}), Error);
}

TEST(Stats, PearsonExamples) {
  EXPECT_NEAR(pearson({1, 2, 3, 4}, {3, 5, 7, 9}), 1.0, 1e-12);
  EXPECT_NEAR(pearson({1, 2, 3, 4}, {-1, -2, -3, -4}), -1.0, 1e-12);
  EXPECT_NEAR(pearson({1, 2, 3, 4}, {1, 3, 2, 4}), 0.8, 1e-12);
  EXPECT_THROW(pearson({1, 1, 1}, {1, 2, 3}), Error);
  EXPECT_THROW(pearson({1, 2, 3}, {1, 2}), Error);
}

TEST(Stats, PearsonAffine) {
  Rng rng(46);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> x, y;
    const double a = rng.uniform(-5, 5), b = rng.uniform(-10, 10);
    for (int i = 0; i < 12; ++i) {
      x.push_back(rng.uniform(-3, 3));
      y.push_back(a * x.back() + b);
    }
    EXPECT_NEAR(pearson(x, y), a > 0 ? 1.0 : -1.0, 1e-12);
  }
}

TEST(Stats, SpearmanTiesAndMonotone) {
  EXPECT_NEAR(spearman({1, 2, 2, 4}, {1, 2, 3, 4}), 4.5 / std::sqrt(22.5), 1e-12);
  EXPECT_EQ(mid_ranks({3, 1, 3, 2}), (std::vector<double>{3.5, 1, 3.5, 2}));
  Rng rng(47);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> x, y, fx, gy;
    for (int i = 0; i < 15; ++i) {
      x.push_back(rng.uniform(0.1, 5));
      y.push_back(rng.range(0, 6));  // ties
      fx.push_back(std::exp(x.back()));
      gy.push_back(std::log(y.back() + 1));
    }
    EXPECT_NEAR(spearman(x, y), spearman(fx, gy), 1e-12);
    EXPECT_NEAR(spearman(x, y), oracle::spearman(x, y), 1e-12);
  }
}

TEST(Mos, ParseRules) {
  const auto t = parse_mos("scene,model,mos\ngarden,zipnerf,4.4\nroom,a,4.0\nroom,a,5.0\n");
  EXPECT_DOUBLE_EQ(t.entries.at({"garden", "zipnerf"}), 4.4);
  EXPECT_DOUBLE_EQ(t.entries.at({"room", "a"}), 4.5);
  EXPECT_EQ(t.warnings.size(), 1u);
  auto kind = [](const std::string& s) {
    try {
      parse_mos(s);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Io;
  };
  EXPECT_EQ(kind("scene,model,mos\na,b,6\n"), ErrorKind::OutOfRangeMOS);
  EXPECT_EQ(kind("scene,model,mos\na,b\n"), ErrorKind::MalformedRow);
  EXPECT_EQ(kind("scene,model,mos\na,b,x\n"), ErrorKind::MalformedRow);
  EXPECT_EQ(kind("foo,bar\n"), ErrorKind::MalformedRow);
}

TEST(Correlate, CopyAndReverseOfMos) {
  MosTable mos;
  std::vector<ScoreRow> rows;
  const std::vector<double> m = {1.5, 3.0, 4.2, 2.2};
  for (const std::string scene : {"s1", "s2"})
    for (std::size_t i = 0; i < m.size(); ++i) {
      const std::string model = "m" + std::to_string(i);
      mos.entries[{scene, model}] = m[i];
      rows.push_back({scene, model, {{"osim", m[i] / 5}, {"lpips", m[i] / 5}, {"ssim", 1 - m[i] / 5}}});
    }
  const auto t = correlate_with_mos(rows, mos);
  ASSERT_EQ(t.entries.size(), 3u);
  for (const auto& e : t.entries) {
    const double expect = e.metric == "ssim" || e.metric == "lpips" ? -1.0 : 1.0;
    EXPECT_NEAR(e.spearman, expect, 1e-12) << e.metric;
    EXPECT_EQ(e.scenes, 2);
  }
}

TEST(Correlate, ExclusionAndMissingJoins) {
  MosTable mos;
  mos.entries[{"s", "a"}] = 1;
  mos.entries[{"s", "b"}] = 2;
  mos.entries[{"s", "c"}] = 3;
  mos.entries[{"s", "outlier"}] = 5;
  mos.entries[{"s", "ghost"}] = 4;
  std::vector<ScoreRow> rows = {{"s", "a", {{"osim", 0.1}}},
                                {"s", "b", {{"osim", 0.2}}},
                                {"s", "c", {{"osim", 0.3}}},
                                {"s", "outlier", {{"osim", 0.0}}},
                                {"s", "nomos", {{"osim", 0.5}}}};
  const auto t = correlate_with_mos(rows, mos, {"outlier"});
  ASSERT_EQ(t.entries.size(), 1u);
  EXPECT_NEAR(t.entries[0].spearman, 1.0, 1e-12);
  const auto has = [&](const std::string& s) {
    return std::any_of(t.warnings.begin(), t.warnings.end(),
                       [&](const std::string& w) { return w.find(s) != std::string::npos; });
  };
  EXPECT_TRUE(has("nomos"));
  EXPECT_TRUE(has("ghost"));
}

TEST(Correlate, ThreeModelHandOracle) {
  // MOS 3.1, 4.0, 2.5; metric 0.7, 0.9, 0.4 -> ranks identical -> rho 1
  // pearson by hand: dx = (0, .2, -.3) - mean... computed by the oracle formula
  MosTable mos;
  mos.entries[{"s", "x"}] = 3.1;
  mos.entries[{"s", "y"}] = 4.0;
  mos.entries[{"s", "z"}] = 2.5;
  std::vector<ScoreRow> rows = {{"s", "x", {{"osim", 0.7}}}, {"s", "y", {{"osim", 0.9}}}, {"s", "z", {{"osim", 0.4}}}};
  const auto t = correlate_with_mos(rows, mos);
  EXPECT_NEAR(t.entries[0].spearman, 1.0, 1e-12);
  EXPECT_NEAR(t.entries[0].pearson, oracle::pearson({0.7, 0.9, 0.4}, {3.1, 4.0, 2.5}), 1e-12);
}
