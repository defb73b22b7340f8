#pragma once

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "osim/error.hpp"
#include "osim/inference.hpp"
#include "osim/io.hpp"
#include "osim/json.hpp"
#include "osim/saliency.hpp"
#include "osim/scoring.hpp"

namespace osim {

/// Everything a CLI run needs. Precedence, lowest first: built-in defaults,
/// config file, OSIM_* environment variables, command-line flags.
struct RunConfig {
  std::string backend = "onnx";  // onnx | fixture
  ModelConfig model;
  SaliencyMode saliency_mode = SaliencyMode::Gbvs;
  SaliencyConfig saliency;
  SsimParams ssim;
  int parallelism = 1;
  std::vector<std::string> scenes;
  std::string out_dir = "osim_out";
  std::string method;
  std::vector<std::string> exclude;
  bool timestamp = true;
  double blur_sigma = 5.0;
  json leaderboard_rules = json::object();

  EvaluationOptions evaluation_options() const {
    EvaluationOptions o;
    o.saliency_mode = saliency_mode;
    o.saliency = saliency;
    o.parallelism = parallelism;
    o.ssim = ssim;
    return o;
  }

  /// Checks values; `require_model` also checks that the model path exists.
  void validate(bool require_model) const {
    if (backend != "onnx" && backend != "fixture")
      fail(ErrorKind::InvalidConfig, "backend must be onnx or fixture, got '" + backend + "'");
    if (parallelism < 1) fail(ErrorKind::InvalidConfig, "parallelism must be >= 1");
    if (!(blur_sigma >= 0.0)) fail(ErrorKind::InvalidConfig, "blur sigma must be >= 0");
    model.validate();
    saliency.validate();
    if (require_model) {
      if (model.model_path.empty()) fail(ErrorKind::InvalidConfig, "no model given (--model or OSIM_MODEL)");
      if (!std::filesystem::exists(model.model_path)) fail(ErrorKind::FileNotFound, model.model_path);
    }
    for (const auto& s : scenes)
      if (!std::filesystem::is_directory(s)) fail(ErrorKind::FileNotFound, "scene directory " + s);
  }
};

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

namespace detail {

inline double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) fail(ErrorKind::InvalidConfig, key + ": '" + v + "' is not a number");
  return d;
}

inline int parse_int(const std::string& key, const std::string& v) {
  const double d = parse_double(key, v);
  if (d != static_cast<int>(d)) fail(ErrorKind::InvalidConfig, key + ": '" + v + "' is not an integer");
  return static_cast<int>(d);
}

}  // namespace detail

/// Applies a JSON config object (comments allowed in the file). Unknown keys
/// are rejected so typos do not silently fall back to defaults.
inline void apply_config_json(RunConfig& c, const json& j) {
  static const std::vector<std::string> known = {
      "backend", "model", "layer", "conf", "nms_iou", "input_size", "class_names", "saliency", "gbvs", "ssim",
      "parallel", "scenes", "out", "method", "exclude", "timestamp", "sigma", "leaderboard_rules"};
  try {
    for (const auto& [k, v] : j.items())
      if (std::find(known.begin(), known.end(), k) == known.end())
        fail(ErrorKind::InvalidConfig, "unknown config key '" + k + "'");
    if (j.contains("backend")) c.backend = j["backend"].get<std::string>();
    if (j.contains("model")) c.model.model_path = j["model"].get<std::string>();
    if (j.contains("layer")) c.model.feature_layer = j["layer"].get<std::string>();
    if (j.contains("conf")) c.model.confidence_threshold = j["conf"].get<double>();
    if (j.contains("nms_iou")) c.model.nms_iou_threshold = j["nms_iou"].get<double>();
    if (j.contains("input_size")) {
      const auto s = j["input_size"].get<std::vector<int>>();
      if (s.size() != 2) fail(ErrorKind::InvalidConfig, "input_size must be [width, height]");
      c.model.input_width = s[0];
      c.model.input_height = s[1];
    }
    if (j.contains("class_names")) c.model.class_names = j["class_names"].get<std::vector<std::string>>();
    if (j.contains("saliency")) c.saliency_mode = parse_saliency_mode(j["saliency"].get<std::string>());
    if (j.contains("gbvs")) {
      const auto& g = j["gbvs"];
      c.saliency.intensity = g.value("intensity", c.saliency.intensity);
      c.saliency.color = g.value("color", c.saliency.color);
      c.saliency.orientation = g.value("orientation", c.saliency.orientation);
      c.saliency.orientations_deg = g.value("orientations_deg", c.saliency.orientations_deg);
      c.saliency.graph_sigma = g.value("graph_sigma", c.saliency.graph_sigma);
      c.saliency.normalization_sigma = g.value("normalization_sigma", c.saliency.normalization_sigma);
      c.saliency.power_iterations = g.value("power_iterations", c.saliency.power_iterations);
      c.saliency.tolerance = g.value("tolerance", c.saliency.tolerance);
      c.saliency.map_resolution = g.value("map_resolution", c.saliency.map_resolution);
    }
    if (j.contains("ssim")) {
      const auto& s = j["ssim"];
      c.ssim.window = s.value("window", c.ssim.window);
      c.ssim.sigma = s.value("sigma", c.ssim.sigma);
      c.ssim.k1 = s.value("k1", c.ssim.k1);
      c.ssim.k2 = s.value("k2", c.ssim.k2);
    }
    if (j.contains("parallel")) c.parallelism = j["parallel"].get<int>();
    if (j.contains("scenes")) c.scenes = j["scenes"].get<std::vector<std::string>>();
    if (j.contains("out")) c.out_dir = j["out"].get<std::string>();
    if (j.contains("method")) c.method = j["method"].get<std::string>();
    if (j.contains("exclude")) c.exclude = j["exclude"].get<std::vector<std::string>>();
    if (j.contains("timestamp")) c.timestamp = j["timestamp"].get<bool>();
    if (j.contains("sigma")) c.blur_sigma = j["sigma"].get<double>();
    if (j.contains("leaderboard_rules")) c.leaderboard_rules = j["leaderboard_rules"];
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidConfig, std::string("config: ") + e.what());
  }
}

inline void load_config_file(RunConfig& c, const std::filesystem::path& path) {
  const std::string text = io::read_text(path);
  json j;
  try {
    j = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidConfig, path.string() + ": " + e.what());
  }
  if (!j.is_object()) fail(ErrorKind::InvalidConfig, path.string() + ": top level must be an object");
  apply_config_json(c, j);
}

/// Environment lookup, injectable for tests.
using EnvLookup = std::optional<std::string> (*)(const char*);

inline std::optional<std::string> process_env(const char* name) {
  const char* v = std::getenv(name);
  if (!v) return std::nullopt;
  return std::string(v);
}

inline void apply_env_overrides(RunConfig& c, EnvLookup env = process_env) {
  if (auto v = env("OSIM_BACKEND")) c.backend = *v;
  if (auto v = env("OSIM_MODEL")) c.model.model_path = *v;
  if (auto v = env("OSIM_LAYER")) c.model.feature_layer = *v;
  if (auto v = env("OSIM_CONF")) c.model.confidence_threshold = detail::parse_double("OSIM_CONF", *v);
  if (auto v = env("OSIM_NMS_IOU")) c.model.nms_iou_threshold = detail::parse_double("OSIM_NMS_IOU", *v);
  if (auto v = env("OSIM_SALIENCY")) c.saliency_mode = parse_saliency_mode(*v);
  if (auto v = env("OSIM_PARALLEL")) c.parallelism = detail::parse_int("OSIM_PARALLEL", *v);
  if (auto v = env("OSIM_OUT")) c.out_dir = *v;
  if (auto v = env("OSIM_METHOD")) c.method = *v;
  if (auto v = env("OSIM_EXCLUDE")) c.exclude = split_list(*v);
  if (auto v = env("OSIM_SIGMA")) c.blur_sigma = detail::parse_double("OSIM_SIGMA", *v);
  if (auto v = env("OSIM_NO_TIMESTAMP")) c.timestamp = (*v == "0" || v->empty());
}

}  // namespace osim
