#pragma once

// Deterministic synthetic inputs and an in-memory backend shared by the unit
// and acceptance suites.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "osim/osim.hpp"

namespace osim::testing {

/// splitmix64: identical streams on every platform (unlike std distributions).
struct Rng {
  std::uint64_t state;
  explicit Rng(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int range(int lo, int hi) { return lo + static_cast<int>(next() % static_cast<std::uint64_t>(hi - lo + 1)); }
  double normal() {
    const double u1 = std::max(uniform(), 1e-300), u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }
};

inline Image random_image(int w, int h, int c, Rng& rng) {
  Image img(w, h, c);
  for (auto& v : img.data) v = static_cast<float>(rng.uniform());
  return img;
}

/// Smooth gradients plus low-contrast fine noise.
inline Image textured_background(int w, int h, Rng& rng) {
  Image img(w, h, 3);
  const double fx = rng.uniform(0.02, 0.06), fy = rng.uniform(0.02, 0.06);
  const double base[3] = {rng.uniform(0.3, 0.6), rng.uniform(0.3, 0.6), rng.uniform(0.3, 0.6)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = base[c] + 0.12 * std::sin(fx * x + c) * std::cos(fy * y) + 0.08 * (rng.uniform() - 0.5);
        img.at(x, y, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
  return img;
}

/// High-contrast checker-and-noise texture in a tinted colour.
inline void paint_object(Image& img, const PixelBox& b, Rng& rng, int period = 4) {
  const double tint[3] = {rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0)};
  for (int y = b.y1; y <= b.y2; ++y)
    for (int x = b.x1; x <= b.x2; ++x) {
      const bool on = ((x - b.x1) / period + (y - b.y1) / period) % 2 == 0;
      const double v = (on ? 0.85 : 0.1) + 0.1 * (rng.uniform() - 0.5);
      for (int c = 0; c < img.channels; ++c) img.at(x, y, c) = static_cast<float>(std::clamp(v * tint[c], 0.0, 1.0));
    }
}

inline FeatureMap random_features(int w, int h, int d, Rng& rng, double zero_prob = 0.0) {
  FeatureMap f(w, h, d);
  for (auto& v : f.data) v = rng.uniform() < zero_prob ? 0.0f : static_cast<float>(rng.uniform(-1.0, 1.0));
  return f;
}

/// Backend whose detections and features are registered per input tensor.
class MemoryBackend final : public InferenceBackend {
 public:
  MemoryBackend(int input_w, int input_h, FeatureShape shape, std::vector<std::string> classes) : shape_(shape) {
    cfg_.input_width = input_w;
    cfg_.input_height = input_h;
    cfg_.class_names = std::move(classes);
    cfg_.feature_layer = "memory";
  }

  void add(const Image& tensor_pixels, std::vector<Detection> dets, FeatureMap features) {
    const auto key = image_digest(tensor_pixels);
    dets_[key] = std::move(dets);
    feats_[key] = std::move(features);
  }

  const ModelConfig& config() const override { return cfg_; }
  FeatureShape feature_shape() const override { return shape_; }
  std::string identity() const override { return "memory"; }
  std::vector<Detection> detect(const TensorImage& t) override {
    const auto it = dets_.find(image_digest(t.pixels));
    if (it == dets_.end()) fail(ErrorKind::InferenceFailure, "unregistered image");
    return it->second;
  }
  FeatureMap extract_features(const TensorImage& t) override {
    const auto it = feats_.find(image_digest(t.pixels));
    if (it == feats_.end()) fail(ErrorKind::InferenceFailure, "unregistered image");
    return it->second;
  }

 private:
  ModelConfig cfg_;
  FeatureShape shape_;
  std::map<std::uint64_t, std::vector<Detection>> dets_;
  std::map<std::uint64_t, FeatureMap> feats_;
};

inline PixelBox random_box(int w, int h, Rng& rng, int min_side = 1) {
  const int bw = rng.range(min_side, w), bh = rng.range(min_side, h);
  const int x1 = rng.range(0, w - bw), y1 = rng.range(0, h - bh);
  return {x1, y1, x1 + bw - 1, y1 + bh - 1};
}

/// Blurs everything except the given boxes (the complement of object blur).
inline Image blur_background(const Image& img, const std::vector<PixelBox>& boxes, double sigma) {
  Image out = gaussian_blur(img, sigma);
  for (const auto& b : boxes)
    for (int y = b.y1; y <= b.y2; ++y)
      for (int x = b.x1; x <= b.x2; ++x)
        for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(x, y, c);
  return out;
}

/// A multi-object synthetic scene on a textured background with
/// grid-aligned objects; detections are the painted boxes.
struct SyntheticScene {
  Image image;
  std::vector<Detection> detections;
};

inline SyntheticScene make_object_scene(int w, int h, const std::vector<std::pair<int, PixelBox>>& objects,
                                        std::uint64_t seed) {
  Rng rng(seed);
  SyntheticScene s{textured_background(w, h, rng), {}};
  for (const auto& [cls, box] : objects) {
    paint_object(s.image, box, rng, 2 + static_cast<int>(rng.next() % 4));
    s.detections.push_back({cls, 0.9, box});
  }
  return s;
}

/// Writes a cells-mode fixture directory whose only recorded image is `ref`.
inline void write_cells_fixture(const std::filesystem::path& dir, const Image& ref, const std::vector<Detection>& dets,
                                const std::vector<std::string>& classes, int cell_stride = 32) {
  std::filesystem::create_directories(dir);
  FixtureManifest m;
  m.input_width = ref.width;
  m.input_height = ref.height;
  m.class_names = classes;
  m.cell_features = true;
  m.cell_stride = cell_stride;
  write_manifest(dir, m);
  ModelConfig cfg;
  cfg.input_width = ref.width;
  cfg.input_height = ref.height;
  cfg.class_names = classes;
  write_fixture(dir, preprocess(ref, cfg), dets);
}

inline std::filesystem::path fresh_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("osim_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace osim::testing
