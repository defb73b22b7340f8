#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/dnn.hpp>

#include "osim/error.hpp"
#include "osim/inference.hpp"
#include "osim/io.hpp"
#include "osim/json.hpp"

namespace osim {

/// YOLOX-style detector exported to ONNX, executed with OpenCV's dnn
/// module. The graph must expose the head output (`output_name`) and the
/// configured feature layer as named tensors.
class OnnxBackend final : public InferenceBackend {
 public:
  explicit OnnxBackend(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    namespace fs = std::filesystem;
    if (!fs::exists(cfg_.model_path)) fail(ErrorKind::FileNotFound, cfg_.model_path);
    const auto bytes = io::read_bytes(cfg_.model_path);
    identity_ = "onnx:" + hex64(fnv1a64(std::as_bytes(std::span(bytes))));
    try {
      net_ = cv::dnn::readNetFromONNX(bytes.data(), bytes.size());
    } catch (const cv::Exception& e) {
      fail(ErrorKind::UnsupportedModelFormat, cfg_.model_path + ": " + e.what());
    }
    if (net_.empty()) fail(ErrorKind::UnsupportedModelFormat, cfg_.model_path + ": empty network");
    net_.setPreferableBackend(cv::dnn::DNN_BACKEND_OPENCV);
    net_.setPreferableTarget(cv::dnn::DNN_TARGET_CPU);

    const auto names = net_.getLayerNames();
    auto has = [&](const std::string& n) { return std::find(names.begin(), names.end(), n) != names.end(); };
    if (!has(cfg_.feature_layer))
      fail(ErrorKind::UnknownFeatureLayer,
           "'" + cfg_.feature_layer + "' not exposed by the model; available: " + join(named_layers(names)));
    if (!has(cfg_.output_name))
      fail(ErrorKind::UnsupportedModelFormat, "head output '" + cfg_.output_name + "' not found in model");

    // Probe once to learn the feature resolution and validate the head.
    TensorImage probe;
    probe.pixels = Image(cfg_.input_width, cfg_.input_height, 3, kLetterboxPad);
    const auto [feat, dets] = forward(probe, true);
    (void)dets;
    shape_ = {feat.width, feat.height, feat.depth};
  }

  const ModelConfig& config() const override { return cfg_; }
  FeatureShape feature_shape() const override { return shape_; }
  std::string identity() const override { return identity_; }

  std::vector<Detection> detect(const TensorImage& image) override { return forward(image, true).second; }
  FeatureMap extract_features(const TensorImage& image) override { return forward(image, false).first; }

  /// Layer names given explicitly in the graph (exporter-generated names
  /// such as "/stem/Conv_output_0" or "onnx::..." are skipped).
  static std::vector<std::string> named_layers(const std::vector<std::string>& names) {
    std::vector<std::string> out;
    for (const auto& n : names)
      if (!n.empty() && n.front() != '/' && n.rfind("onnx::", 0) != 0 &&
          !std::all_of(n.begin(), n.end(), [](unsigned char c) { return std::isdigit(c); }))
        out.push_back(n);
    return out;
  }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
    return s.empty() ? "(none)" : s;
  }

  cv::Mat to_blob(const TensorImage& image) const {
    const Image& px = image.pixels;
    if (px.width != cfg_.input_width || px.height != cfg_.input_height || px.channels != 3)
      fail(ErrorKind::InferenceFailure, "tensor image does not match the model input size");
    const int sz[4] = {1, 3, px.height, px.width};
    cv::Mat blob(4, sz, CV_32F);
    float* dst = blob.ptr<float>();
    const std::size_t plane = px.pixel_count();
    // BGR planes in [0, 255], the layout YOLOX checkpoints were trained on.
    for (int y = 0; y < px.height; ++y)
      for (int x = 0; x < px.width; ++x)
        for (int c = 0; c < 3; ++c)
          dst[static_cast<std::size_t>(2 - c) * plane + static_cast<std::size_t>(y) * px.width + x] =
              px.at(x, y, c) * 255.0f;
    return blob;
  }

  std::pair<FeatureMap, std::vector<Detection>> forward(const TensorImage& image, bool with_detections) {
    const cv::Mat blob = to_blob(image);
    std::vector<cv::Mat> outs;
    std::vector<std::string> wanted{cfg_.feature_layer};
    if (with_detections) wanted.push_back(cfg_.output_name);
    {
      std::lock_guard lock(mutex_);
      try {
        net_.setInput(blob, cfg_.input_name);
        net_.forward(outs, wanted);
      } catch (const cv::Exception& e) {
        fail(ErrorKind::InferenceFailure, "layer '" + cfg_.feature_layer + "': " + e.what());
      }
    }
    const cv::Mat& fm = outs.at(0);
    if (fm.dims != 4 || fm.size[0] != 1)
      fail(ErrorKind::InferenceFailure, "feature layer '" + cfg_.feature_layer + "' is not a 1xDxHxW tensor");
    const int d = fm.size[1], h = fm.size[2], w = fm.size[3];
    FeatureMap feat(w, h, d);
    const float* src = fm.ptr<float>();
    for (int c = 0; c < d; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          feat.data[(static_cast<std::size_t>(y) * w + x) * d + c] =
              src[(static_cast<std::size_t>(c) * h + y) * w + x];
    feat.check_valid();

    std::vector<Detection> dets;
    if (with_detections) {
      const cv::Mat& head = outs.at(1);
      if (head.dims != 3 || head.size[0] != 1)
        fail(ErrorKind::InferenceFailure, "head output '" + cfg_.output_name + "' is not a 1xNxK tensor");
      const std::size_t rows = static_cast<std::size_t>(head.size[1]), len = static_cast<std::size_t>(head.size[2]);
      dets = decode_yolox(std::span<const float>(head.ptr<float>(), rows * len), len, cfg_);
    }
    return {std::move(feat), std::move(dets)};
  }

  ModelConfig cfg_;
  cv::dnn::Net net_;
  std::mutex mutex_;
  FeatureShape shape_;
  std::string identity_;
};

}  // namespace osim
