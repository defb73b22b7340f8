#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "osim/error.hpp"
#include "osim/image.hpp"

namespace osim {

/// Class labels of the COCO-trained YOLOX checkpoints, in model output order.
inline const std::vector<std::string>& coco_class_names() {
  static const std::vector<std::string> names = {
      "person",        "bicycle",      "car",           "motorcycle",    "airplane",     "bus",
      "train",         "truck",        "boat",          "traffic light", "fire hydrant", "stop sign",
      "parking meter", "bench",        "bird",          "cat",           "dog",          "horse",
      "sheep",         "cow",          "elephant",      "bear",          "zebra",        "giraffe",
      "backpack",      "umbrella",     "handbag",       "tie",           "suitcase",     "frisbee",
      "skis",          "snowboard",    "sports ball",   "kite",          "baseball bat", "baseball glove",
      "skateboard",    "surfboard",    "tennis racket", "bottle",        "wine glass",   "cup",
      "fork",          "knife",        "spoon",         "bowl",          "banana",       "apple",
      "sandwich",      "orange",       "broccoli",      "carrot",        "hot dog",      "pizza",
      "donut",         "cake",         "chair",         "couch",         "potted plant", "bed",
      "dining table",  "toilet",       "tv",            "laptop",        "mouse",        "remote",
      "keyboard",      "cell phone",   "microwave",     "oven",          "toaster",      "sink",
      "refrigerator",  "book",         "clock",         "vase",          "scissors",     "teddy bear",
      "hair drier",    "toothbrush"};
  return names;
}

struct ModelConfig {
  std::string model_path;
  int input_width = 640;
  int input_height = 640;
  double confidence_threshold = 0.35;
  std::string feature_layer = "backbone.dark5";
  std::vector<std::string> class_names = coco_class_names();
  double nms_iou_threshold = 0.45;
  std::vector<int> head_strides = {8, 16, 32};
  std::string input_name = "images";
  std::string output_name = "output";

  void validate() const {
    if (input_width <= 0 || input_height <= 0)
      fail(ErrorKind::InvalidConfig, "input dimensions must be positive");
    if (!(confidence_threshold >= 0.0 && confidence_threshold <= 1.0))
      fail(ErrorKind::InvalidConfig, "confidence_threshold must lie in [0,1]");
    if (!(nms_iou_threshold > 0.0 && nms_iou_threshold <= 1.0))
      fail(ErrorKind::InvalidConfig, "nms_iou_threshold must lie in (0,1]");
    if (class_names.empty()) fail(ErrorKind::InvalidConfig, "class_names is empty");
    if (feature_layer.empty()) fail(ErrorKind::InvalidConfig, "feature_layer is empty");
    for (int s : head_strides)
      if (s <= 0) fail(ErrorKind::InvalidConfig, "head strides must be positive");
  }
};

/// One detected object. `bbox` is in detector input space with inclusive
/// integer corners.
struct Detection {
  int class_id = 0;
  double confidence = 0.0;
  PixelBox bbox;

  bool operator==(const Detection&) const = default;
};

/// W x H x D activations stored cell-major (HWC): the D values of cell
/// (x, y) are contiguous.
struct FeatureMap {
  int width = 0;
  int height = 0;
  int depth = 0;
  std::vector<float> data;

  FeatureMap() = default;
  FeatureMap(int w, int h, int d, float fill = 0.0f)
      : width(w), height(h), depth(d), data(static_cast<std::size_t>(w) * h * d, fill) {}

  std::span<const float> cell(int x, int y) const noexcept {
    return {data.data() + (static_cast<std::size_t>(y) * width + x) * depth,
            static_cast<std::size_t>(depth)};
  }
  std::span<float> cell(int x, int y) noexcept {
    return {data.data() + (static_cast<std::size_t>(y) * width + x) * depth,
            static_cast<std::size_t>(depth)};
  }

  bool same_shape(const FeatureMap& o) const noexcept {
    return width == o.width && height == o.height && depth == o.depth;
  }

  void check_valid() const {
    if (width <= 0 || height <= 0 || depth <= 0)
      fail(ErrorKind::ShapeMismatch, "feature map has a zero dimension");
    if (data.size() != static_cast<std::size_t>(width) * height * depth)
      fail(ErrorKind::ShapeMismatch, "feature map data length != W*H*D");
    for (float v : data)
      if (!std::isfinite(v)) fail(ErrorKind::NonFiniteFeatures, "feature map contains NaN or Inf");
  }

  bool operator==(const FeatureMap&) const = default;
};

struct FeatureShape {
  int width = 0;
  int height = 0;
  int depth = 0;
  bool operator==(const FeatureShape&) const = default;
};

/// Maps original image pixels into detector input pixels:
/// input = original * scale + offset.
struct LetterboxTransform {
  double scale = 1.0;
  double offset_x = 0.0;
  double offset_y = 0.0;
  int source_width = 0;
  int source_height = 0;
  int resized_width = 0;
  int resized_height = 0;

  bool is_identity() const noexcept { return scale == 1.0 && offset_x == 0.0 && offset_y == 0.0; }
};

/// Letterboxed RGB image in detector input space, values in [0,1].
struct TensorImage {
  Image pixels;
  LetterboxTransform transform;
};

inline constexpr float kLetterboxPad = 114.0f / 255.0f;

inline Image to_rgb(const Image& image) {
  if (image.channels == 3) return image;
  Image out(image.width, image.height, 3);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c)
        out.at(x, y, c) = image.channels == 1 ? image.at(x, y, 0) : image.at(x, y, c);
  return out;
}

/// Aspect-preserving resize into the detector input with the resized image
/// anchored at the top-left corner and the remainder padded with gray
/// 114/255 (the YOLOX convention, so offsets are always zero).
inline TensorImage preprocess(const DecodedImage& image, const ModelConfig& cfg) {
  if (image.empty() || image.data.empty()) fail(ErrorKind::EmptyImage, "image has no pixels");
  if (image.channels != 1 && image.channels != 3 && image.channels != 4)
    fail(ErrorKind::EmptyImage, "expected 1, 3 or 4 channels");
  const double scale = std::min(static_cast<double>(cfg.input_width) / image.width,
                                static_cast<double>(cfg.input_height) / image.height);
  const int rw = std::clamp(static_cast<int>(image.width * scale), 1, cfg.input_width);
  const int rh = std::clamp(static_cast<int>(image.height * scale), 1, cfg.input_height);

  const Image rgb = to_rgb(image);
  TensorImage t;
  t.transform = {scale, 0.0, 0.0, image.width, image.height, rw, rh};
  if (rw == cfg.input_width && rh == cfg.input_height && rgb.width == rw && rgb.height == rh) {
    t.pixels = rgb;
    return t;
  }
  const Image resized = (rgb.width == rw && rgb.height == rh) ? rgb : resize_bilinear(rgb, rw, rh);
  t.pixels = Image(cfg.input_width, cfg.input_height, 3, kLetterboxPad);
  for (int y = 0; y < rh; ++y)
    std::copy_n(resized.data.data() + resized.index(0, y), static_cast<std::size_t>(rw) * 3,
                t.pixels.data.data() + t.pixels.index(0, y));
  return t;
}

/// Maps a detector-input box back to source image pixels.
inline PixelBox to_source_box(const PixelBox& b, const LetterboxTransform& t) {
  const double s = t.scale > 0 ? t.scale : 1.0;
  auto fx = [&](int v) { return std::clamp(static_cast<int>(std::floor((v - t.offset_x) / s)), 0, t.source_width - 1); };
  auto fy = [&](int v) { return std::clamp(static_cast<int>(std::floor((v - t.offset_y) / s)), 0, t.source_height - 1); };
  auto cx = [&](int v) {
    return std::clamp(static_cast<int>(std::ceil((v + 1 - t.offset_x) / s)) - 1, 0, t.source_width - 1);
  };
  auto cy = [&](int v) {
    return std::clamp(static_cast<int>(std::ceil((v + 1 - t.offset_y) / s)) - 1, 0, t.source_height - 1);
  };
  return {fx(b.x1), fy(b.y1), std::max(fx(b.x1), cx(b.x2)), std::max(fy(b.y1), cy(b.y2))};
}

/// Intersection over union of inclusive pixel boxes.
inline double box_iou(const PixelBox& a, const PixelBox& b) noexcept {
  const int ix1 = std::max(a.x1, b.x1), iy1 = std::max(a.y1, b.y1);
  const int ix2 = std::min(a.x2, b.x2), iy2 = std::min(a.y2, b.y2);
  if (ix2 < ix1 || iy2 < iy1) return 0.0;
  const double inter = static_cast<double>(ix2 - ix1 + 1) * (iy2 - iy1 + 1);
  return inter / (static_cast<double>(a.area()) + static_cast<double>(b.area()) - inter);
}

/// Greedy class-agnostic NMS. Candidates are visited by descending
/// confidence; ties keep their input order, which makes the result a pure
/// function of the candidate list.
inline std::vector<Detection> non_max_suppression(std::vector<Detection> candidates, double iou_threshold) {
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
  std::vector<Detection> kept;
  for (const auto& c : candidates) {
    bool suppressed = false;
    for (const auto& k : kept)
      if (box_iou(c.bbox, k.bbox) > iou_threshold) {
        suppressed = true;
        break;
      }
    if (!suppressed) kept.push_back(c);
  }
  return kept;
}

/// Converts a float xyxy box to inclusive pixel corners clamped to the input.
inline PixelBox clamp_box(double x1, double y1, double x2, double y2, int width, int height) noexcept {
  auto cl = [](double v, int hi) { return std::clamp(static_cast<int>(std::floor(v)), 0, hi - 1); };
  PixelBox b{cl(x1, width), cl(y1, height), cl(x2, width), cl(y2, height)};
  b.x2 = std::max(b.x2, b.x1);
  b.y2 = std::max(b.y2, b.y1);
  return b;
}

/// Decodes a raw YOLOX head output (rows of [tx, ty, tw, th, obj, cls...],
/// objectness and class scores already passed through a sigmoid), applies
/// the confidence threshold to obj * cls and runs NMS.
inline std::vector<Detection> decode_yolox(std::span<const float> rows, std::size_t row_len,
                                           const ModelConfig& cfg) {
  const std::size_t num_classes = cfg.class_names.size();
  if (row_len != 5 + num_classes)
    fail(ErrorKind::InferenceFailure, "head output row length " + std::to_string(row_len) +
                                          " does not match 5 + " + std::to_string(num_classes) + " classes");
  std::size_t expected = 0;
  for (int s : cfg.head_strides)
    expected += static_cast<std::size_t>(cfg.input_width / s) * static_cast<std::size_t>(cfg.input_height / s);
  if (rows.size() != expected * row_len)
    fail(ErrorKind::InferenceFailure, "head output has " + std::to_string(rows.size() / row_len) +
                                          " anchors, expected " + std::to_string(expected));

  std::vector<Detection> candidates;
  std::size_t anchor = 0;
  for (int stride : cfg.head_strides) {
    const int gw = cfg.input_width / stride, gh = cfg.input_height / stride;
    for (int gy = 0; gy < gh; ++gy)
      for (int gx = 0; gx < gw; ++gx, ++anchor) {
        const float* r = rows.data() + anchor * row_len;
        const double obj = r[4];
        std::size_t best = 0;
        for (std::size_t c = 1; c < num_classes; ++c)
          if (r[5 + c] > r[5 + best]) best = c;
        const double score = obj * r[5 + best];
        if (!(score >= cfg.confidence_threshold)) continue;
        const double cx = (r[0] + gx) * stride, cy = (r[1] + gy) * stride;
        const double w = std::exp(static_cast<double>(r[2])) * stride;
        const double h = std::exp(static_cast<double>(r[3])) * stride;
        Detection d;
        d.class_id = static_cast<int>(best);
        d.confidence = score;
        d.bbox = clamp_box(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2, cfg.input_width, cfg.input_height);
        candidates.push_back(d);
      }
  }
  return non_max_suppression(std::move(candidates), cfg.nms_iou_threshold);
}

/// A loaded detector. Implementations serialize concurrent calls
/// internally; independent handles may run in parallel.
class InferenceBackend {
 public:
  virtual ~InferenceBackend() = default;

  virtual const ModelConfig& config() const = 0;
  /// Resolution of the configured feature layer.
  virtual FeatureShape feature_shape() const = 0;
  virtual std::vector<Detection> detect(const TensorImage& image) = 0;
  virtual FeatureMap extract_features(const TensorImage& image) = 0;
  /// Stable description of what produced the scores (kind + content hash).
  virtual std::string identity() const = 0;
};

}  // namespace osim
