#include <gtest/gtest.h>

#include "osim/osim.hpp"
#include "support/oracles.hpp"
#include "support/synth.hpp"

using namespace osim;
using osim::testing::Rng;

TEST(Image, GaussianBlurMatchesDirectConvolution) {
  // checkerboard patch
  Image img(24, 20, 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = ((x / 3 + y / 3) % 2) ? 0.9f : 0.1f * c;
  const Image fast = gaussian_blur(img, 2.0);
  const Image slow = oracle::blur(img, 2.0);
  for (std::size_t i = 0; i < fast.data.size(); ++i) ASSERT_NEAR(fast.data[i], slow.data[i], 1e-6);
}

TEST(Image, BlurWithZeroSigmaIsCopy) {
  Rng rng(1);
  const Image img = osim::testing::random_image(9, 7, 3, rng);
  EXPECT_EQ(gaussian_blur(img, 0.0), img);
}

TEST(Image, CropRejectsOutOfBounds) {
  Image img(10, 10, 1);
  EXPECT_THROW(crop(img, {5, 5, 10, 9}), Error);
  EXPECT_EQ(crop(img, {2, 3, 4, 8}).width, 3);
  EXPECT_EQ(crop(img, {2, 3, 4, 8}).height, 6);
}

TEST(Image, ResizeKeepsConstantImage) {
  Image img(13, 9, 3, 0.25f);
  const Image r = resize_bilinear(img, 31, 4);
  for (float v : r.data) EXPECT_FLOAT_EQ(v, 0.25f);
}

TEST(Image, DigestIgnoresSubQuantumNoise) {
  Image a(4, 4, 3, 0.5f), b = a;
  b.data[0] += 1e-4f;
  EXPECT_EQ(image_digest(a), image_digest(b));
  b.data[0] += 0.01f;
  EXPECT_NE(image_digest(a), image_digest(b));
}

TEST(Preprocess, LetterboxesTopLeftWithGrayPad) {
  ModelConfig cfg;
  cfg.input_width = 64;
  cfg.input_height = 64;
  Image img(128, 64, 3, 1.0f);
  const TensorImage t = preprocess(img, cfg);
  EXPECT_DOUBLE_EQ(t.transform.scale, 0.5);
  EXPECT_EQ(t.transform.resized_width, 64);
  EXPECT_EQ(t.transform.resized_height, 32);
  EXPECT_EQ(t.transform.offset_x, 0.0);
  EXPECT_FLOAT_EQ(t.pixels.at(10, 10, 0), 1.0f);
  EXPECT_FLOAT_EQ(t.pixels.at(10, 40, 1), kLetterboxPad);
}

TEST(Preprocess, IdentityWhenSizesMatch) {
  ModelConfig cfg;
  cfg.input_width = 16;
  cfg.input_height = 16;
  Rng rng(2);
  const Image img = osim::testing::random_image(16, 16, 3, rng);
  const TensorImage t = preprocess(img, cfg);
  EXPECT_TRUE(t.transform.is_identity());
  EXPECT_EQ(t.pixels, img);
}

TEST(Preprocess, GrayAndAlphaBecomeRgb) {
  ModelConfig cfg;
  cfg.input_width = 8;
  cfg.input_height = 8;
  EXPECT_EQ(preprocess(Image(8, 8, 1, 0.3f), cfg).pixels.channels, 3);
  EXPECT_EQ(preprocess(Image(8, 8, 4, 0.3f), cfg).pixels.channels, 3);
  EXPECT_THROW(preprocess(Image(), cfg), Error);
  EXPECT_THROW(preprocess(Image(8, 8, 2), cfg), Error);
}

TEST(Preprocess, SourceBoxRoundTrip) {
  LetterboxTransform t{0.5, 0, 0, 200, 100, 100, 50};
  const PixelBox b = to_source_box({10, 5, 19, 14}, t);
  EXPECT_EQ(b, (PixelBox{20, 10, 39, 29}));
  const PixelBox edge = to_source_box({99, 49, 99, 49}, t);
  EXPECT_EQ(edge.x2, 199);
  EXPECT_EQ(edge.y2, 99);
}

TEST(Nms, SuppressesOverlapsKeepsOrder) {
  std::vector<Detection> c = {{0, 0.5, {0, 0, 9, 9}}, {1, 0.9, {1, 1, 10, 10}}, {0, 0.8, {30, 30, 40, 40}},
                              {0, 0.8, {50, 50, 60, 60}}};
  const auto kept = non_max_suppression(c, 0.45);
  ASSERT_EQ(kept.size(), 3u);
  EXPECT_DOUBLE_EQ(kept[0].confidence, 0.9);
  // equal scores keep input order
  EXPECT_EQ(kept[1].bbox.x1, 30);
  EXPECT_EQ(kept[2].bbox.x1, 50);
}

TEST(Nms, IouOfDisjointAndIdentical) {
  EXPECT_DOUBLE_EQ(box_iou({0, 0, 9, 9}, {0, 0, 9, 9}), 1.0);
  EXPECT_DOUBLE_EQ(box_iou({0, 0, 9, 9}, {10, 10, 19, 19}), 0.0);
  EXPECT_NEAR(box_iou({0, 0, 9, 9}, {5, 0, 14, 9}), 50.0 / 150.0, 1e-12);
}

TEST(DecodeYolox, GridOffsetsAndThreshold) {
  ModelConfig cfg;
  cfg.input_width = 64;
  cfg.input_height = 64;
  cfg.class_names = {"a", "b"};
  const std::size_t anchors = 8 * 8 + 4 * 4 + 2 * 2, len = 7;
  std::vector<float> rows(anchors * len, 0.0f);
  // stride-16 level, cell (1,2): centre ((0.5+1)*16, (0.5+2)*16) = (24, 40), size 16
  const std::size_t a = 64 + 2 * 4 + 1;
  float* r = rows.data() + a * len;
  r[0] = 0.5f;
  r[1] = 0.5f;
  r[2] = 0.0f;
  r[3] = 0.0f;
  r[4] = 0.9f;
  r[5] = 0.2f;
  r[6] = 0.8f;
  // below threshold: 0.5 * 0.6 = 0.3
  float* q = rows.data() + 3 * len;
  q[4] = 0.5f;
  q[5] = 0.6f;
  const auto dets = decode_yolox(rows, len, cfg);
  ASSERT_EQ(dets.size(), 1u);
  EXPECT_EQ(dets[0].class_id, 1);
  EXPECT_NEAR(dets[0].confidence, 0.72, 1e-6);
  EXPECT_EQ(dets[0].bbox, (PixelBox{16, 32, 32, 48}));
}

TEST(DecodeYolox, RejectsWrongRowLength) {
  ModelConfig cfg;
  cfg.input_width = 64;
  cfg.input_height = 64;
  cfg.class_names = {"a"};
  std::vector<float> rows(84 * 7);
  EXPECT_THROW(decode_yolox(rows, 7, cfg), Error);
}

TEST(ClampBox, ClampsAndKeepsOrder) {
  EXPECT_EQ(clamp_box(-5.2, 3.7, 70.0, 2.0, 64, 64), (PixelBox{0, 3, 63, 3}));
}

TEST(Io, FeatureMapRoundTrip) {
  Rng rng(3);
  const FeatureMap f = osim::testing::random_features(3, 2, 5, rng);
  const std::string bytes = io::encode_feature_map(f);
  EXPECT_EQ(io::decode_feature_map(std::span(bytes.data(), bytes.size())), f);
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(io::decode_feature_map(std::span(bad.data(), bad.size())), Error);
  EXPECT_THROW(io::decode_feature_map(std::span(bytes.data(), bytes.size() - 1)), Error);
}

TEST(Io, PngRoundTripIsQuantized) {
  const auto dir = osim::testing::fresh_dir("png");
  Rng rng(4);
  Image img = osim::testing::random_image(7, 5, 3, rng);
  io::save_image(dir / "a.png", img);
  const Image back = io::load_image(dir / "a.png");
  ASSERT_EQ(back.channels, 3);
  for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_NEAR(back.data[i], img.data[i], 0.5 / 255.0 + 1e-6);
  EXPECT_EQ(image_digest(back), image_digest(img));
  EXPECT_THROW(io::load_image(dir / "missing.png"), Error);
}

TEST(Io, RgbOrderSurvivesRoundTrip) {
  const auto dir = osim::testing::fresh_dir("rgb");
  Image img(2, 1, 3, 0.0f);
  img.at(0, 0, 0) = 1.0f;  // red
  img.at(1, 0, 2) = 1.0f;  // blue
  io::save_image(dir / "c.png", img);
  const Image back = io::load_image(dir / "c.png");
  EXPECT_FLOAT_EQ(back.at(0, 0, 0), 1.0f);
  EXPECT_FLOAT_EQ(back.at(1, 0, 2), 1.0f);
  EXPECT_FLOAT_EQ(back.at(0, 0, 2), 0.0f);
}

TEST(ModelConfig, ValidateRejectsBadValues) {
  ModelConfig c;
  c.confidence_threshold = 1.5;
  EXPECT_THROW(c.validate(), Error);
  c = ModelConfig{};
  c.class_names.clear();
  EXPECT_THROW(c.validate(), Error);
  EXPECT_NO_THROW(ModelConfig{}.validate());
  EXPECT_EQ(ModelConfig{}.class_names.size(), 80u);
}

TEST(FeatureMap, CheckValidFlagsNaN) {
  FeatureMap f(2, 2, 2);
  f.data[3] = std::nanf("");
  try {
    f.check_valid();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFiniteFeatures);
  }
}
