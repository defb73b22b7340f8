#pragma once

#include <algorithm>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "osim/backends/cell_features.hpp"
#include "osim/error.hpp"
#include "osim/inference.hpp"
#include "osim/io.hpp"
#include "osim/json.hpp"

namespace osim {

/// Description of a fixture directory (`manifest.json`).
///
///   {
///     "format": "osim-fixtures/1",
///     "input_width": 64, "input_height": 64,
///     "feature_layer": "backbone.dark5",
///     "class_names": ["person", "cup"],
///     "features": "fixture" | "cells",
///     "feature_shape": [W, H, D],      // required for "fixture"
///     "cell_stride": 32                // used by "cells"
///   }
///
/// Per image (keyed by the 16-hex-digit content digest of the letterboxed
/// tensor) the directory holds `<digest>.json` with
/// `{"detections": [{"class_id", "confidence", "bbox": [x1,y1,x2,y2]}]}` and,
/// in "fixture" mode, `<digest>.feat` (see io::encode_feature_map).
struct FixtureManifest {
  int input_width = 640;
  int input_height = 640;
  std::string feature_layer = "backbone.dark5";
  std::vector<std::string> class_names;
  bool cell_features = false;
  FeatureShape feature_shape;
  int cell_stride = 32;

  json to_json() const {
    json j{{"format", "osim-fixtures/1"},
           {"input_width", input_width},
           {"input_height", input_height},
           {"feature_layer", feature_layer},
           {"class_names", class_names},
           {"features", cell_features ? "cells" : "fixture"}};
    if (cell_features) j["cell_stride"] = cell_stride;
    else j["feature_shape"] = {feature_shape.width, feature_shape.height, feature_shape.depth};
    return j;
  }

  static FixtureManifest from_json(const json& j) {
    if (j.value("format", "") != "osim-fixtures/1")
      fail(ErrorKind::UnsupportedModelFormat, "fixture manifest format must be osim-fixtures/1");
    FixtureManifest m;
    try {
      m.input_width = j.at("input_width").get<int>();
      m.input_height = j.at("input_height").get<int>();
      m.feature_layer = j.value("feature_layer", m.feature_layer);
      m.class_names = j.at("class_names").get<std::vector<std::string>>();
      m.cell_features = j.value("features", "fixture") == "cells";
      if (m.cell_features) {
        m.cell_stride = j.value("cell_stride", 32);
      } else {
        const auto s = j.at("feature_shape").get<std::vector<int>>();
        if (s.size() != 3) fail(ErrorKind::UnsupportedModelFormat, "feature_shape must be [W,H,D]");
        m.feature_shape = {s[0], s[1], s[2]};
      }
    } catch (const json::exception& e) {
      fail(ErrorKind::UnsupportedModelFormat, std::string("fixture manifest: ") + e.what());
    }
    return m;
  }
};

inline std::string fixture_key(const TensorImage& image) { return hex64(image_digest(image.pixels)); }

/// Replays golden detections (and feature maps, or weight-free cell
/// features) recorded for specific input images. Lets every downstream
/// module run without detector weights.
class FixtureBackend final : public InferenceBackend {
 public:
  explicit FixtureBackend(std::filesystem::path dir, std::optional<double> confidence_threshold = {},
                          std::optional<std::string> feature_layer = {})
      : dir_(std::move(dir)) {
    namespace fs = std::filesystem;
    const fs::path manifest_path = dir_ / "manifest.json";
    if (!fs::exists(manifest_path)) fail(ErrorKind::FileNotFound, manifest_path.string());
    const std::string text = io::read_text(manifest_path);
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      fail(ErrorKind::UnsupportedModelFormat, manifest_path.string() + ": " + e.what());
    }
    manifest_ = FixtureManifest::from_json(j);
    if (feature_layer && *feature_layer != manifest_.feature_layer)
      fail(ErrorKind::UnknownFeatureLayer,
           "'" + *feature_layer + "' not recorded in fixtures; available: " + manifest_.feature_layer);

    cfg_.model_path = dir_.string();
    cfg_.input_width = manifest_.input_width;
    cfg_.input_height = manifest_.input_height;
    cfg_.feature_layer = manifest_.feature_layer;
    cfg_.class_names = manifest_.class_names;
    if (confidence_threshold) cfg_.confidence_threshold = *confidence_threshold;
    cfg_.validate();

    if (manifest_.cell_features) {
      cells_.emplace(manifest_.cell_stride);
      shape_ = cells_->shape_for(cfg_.input_width, cfg_.input_height);
    } else {
      shape_ = manifest_.feature_shape;
    }
    identity_ = "fixture:" + hex64(directory_digest());
  }

  const ModelConfig& config() const override { return cfg_; }
  FeatureShape feature_shape() const override { return shape_; }
  std::string identity() const override { return identity_; }
  const FixtureManifest& manifest() const noexcept { return manifest_; }

  std::vector<Detection> detect(const TensorImage& image) override {
    const auto path = dir_ / (fixture_key(image) + ".json");
    if (!std::filesystem::exists(path))
      fail(ErrorKind::InferenceFailure, "no golden detections for image digest " + fixture_key(image));
    std::vector<Detection> all;
    try {
      all = json::parse(io::read_text(path)).at("detections").get<std::vector<Detection>>();
    } catch (const json::exception& e) {
      fail(ErrorKind::InferenceFailure, path.string() + ": " + e.what());
    }
    std::vector<Detection> kept;
    for (auto d : all) {
      if (d.confidence < cfg_.confidence_threshold) continue;
      if (d.class_id < 0 || d.class_id >= static_cast<int>(cfg_.class_names.size()))
        fail(ErrorKind::InferenceFailure, path.string() + ": class_id out of range");
      d.bbox = clamp_box(d.bbox.x1, d.bbox.y1, d.bbox.x2, d.bbox.y2, cfg_.input_width, cfg_.input_height);
      kept.push_back(d);
    }
    return kept;
  }

  FeatureMap extract_features(const TensorImage& image) override {
    if (cells_) return cells_->extract(image.pixels);
    const auto path = dir_ / (fixture_key(image) + ".feat");
    if (!std::filesystem::exists(path))
      fail(ErrorKind::InferenceFailure, "no golden features for image digest " + fixture_key(image));
    FeatureMap f = io::load_feature_map(path);
    if (FeatureShape{f.width, f.height, f.depth} != shape_)
      fail(ErrorKind::InferenceFailure, path.string() + ": feature shape differs from manifest");
    return f;
  }

 private:
  std::uint64_t directory_digest() const {
    namespace fs = std::filesystem;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir_))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::uint64_t h = fnv1a64("osim-fixtures/1");
    for (const auto& f : files) {
      h = fnv1a64(f.filename().string(), h);
      const auto bytes = io::read_bytes(f);
      h = fnv1a64(std::as_bytes(std::span(bytes)), h);
    }
    return h;
  }

  std::filesystem::path dir_;
  FixtureManifest manifest_;
  ModelConfig cfg_;
  FeatureShape shape_;
  std::optional<CellFeatureExtractor> cells_;
  std::string identity_;
};

/// Records fixtures for an image: detections always, features when given.
inline void write_fixture(const std::filesystem::path& dir, const TensorImage& image,
                          const std::vector<Detection>& detections, const FeatureMap* features = nullptr) {
  const std::string key = fixture_key(image);
  io::write_atomic(dir / (key + ".json"), json{{"detections", detections}}.dump(2) + "\n");
  if (features) io::save_feature_map(dir / (key + ".feat"), *features);
}

inline void write_manifest(const std::filesystem::path& dir, const FixtureManifest& m) {
  io::write_atomic(dir / "manifest.json", m.to_json().dump(2) + "\n");
}

}  // namespace osim
