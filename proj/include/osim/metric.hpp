#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <vector>

#include "osim/error.hpp"
#include "osim/image.hpp"
#include "osim/inference.hpp"

namespace osim {

/// Inclusive cell rectangle on a feature map.
struct FeatBox {
  int x1 = 0;
  int y1 = 0;
  int x2 = 0;
  int y2 = 0;

  long long area() const noexcept { return static_cast<long long>(x2 - x1 + 1) * (y2 - y1 + 1); }
  bool fits(int w, int h) const noexcept {
    return x1 >= 0 && y1 >= 0 && x1 <= x2 && y1 <= y2 && x2 < w && y2 < h;
  }
  bool operator==(const FeatBox&) const = default;
};

struct ObjectIndexRecord {
  int image_index = 0;
  int object_index = 0;
  int class_id = 0;
  double r_value = 0.0;
};

struct ClassAggregate {
  int class_id = 0;
  double o_value = 0.0;
  int count = 0;
  double s_value = 0.0;
};

/// Maps an inclusive pixel box to the feature grid by the resolution ratio:
/// each corner becomes floor(coord * W_feat / W_img), then the box is
/// clamped to the grid so that sub-cell boxes collapse to a single cell.
inline FeatBox map_bbox_to_featmap(const PixelBox& bbox, int img_w, int img_h, int feat_w, int feat_h) noexcept {
  auto map = [](int v, int img, int feat) {
    const long long scaled = static_cast<long long>(v) * feat;
    const int cell = static_cast<int>(scaled >= 0 ? scaled / img : -((-scaled + img - 1) / img));
    return std::clamp(cell, 0, feat - 1);
  };
  FeatBox b{map(bbox.x1, img_w, feat_w), map(bbox.y1, img_h, feat_h), map(bbox.x2, img_w, feat_w),
            map(bbox.y2, img_h, feat_h)};
  b.x2 = std::max(b.x2, b.x1);
  b.y2 = std::max(b.y2, b.y1);
  return b;
}

/// Cosine similarity clamped to [0, 1]. Two all-zero vectors count as a
/// perfect match; exactly one all-zero vector scores 0.
inline double clamped_cosine(std::span<const float> a, std::span<const float> b) noexcept {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double x = a[k], y = b[k];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 && nb == 0.0) return 1.0;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
}

/// Per-object index r: mean clamped cosine between reference and test
/// feature vectors over every cell of `box`.
inline double object_index_value(const FeatureMap& ref, const FeatureMap& test, const FeatBox& box) {
  if (!ref.same_shape(test)) fail(ErrorKind::ShapeMismatch, "reference and test feature maps differ in shape");
  if (!box.fits(ref.width, ref.height)) fail(ErrorKind::ShapeMismatch, "feature box outside the feature map");
  double sum = 0.0;
  for (int y = box.y1; y <= box.y2; ++y)
    for (int x = box.x1; x <= box.x2; ++x) sum += clamped_cosine(ref.cell(x, y), test.cell(x, y));
  return std::clamp(sum / static_cast<double>(box.area()), 0.0, 1.0);
}

/// Mean of `values` summed in ascending order, so the result is bitwise
/// independent of input order.
inline double order_free_mean(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

/// Groups records by class and averages r within each class. Output is
/// ordered by class id.
inline std::vector<ClassAggregate> collect_class_indices(std::span<const ObjectIndexRecord> records) {
  if (records.empty()) fail(ErrorKind::EmptyRecordSet, "no objects detected in any reference view");
  std::map<int, std::vector<double>> by_class;
  for (const auto& r : records) by_class[r.class_id].push_back(r.r_value);
  std::vector<ClassAggregate> out;
  out.reserve(by_class.size());
  for (auto& [cls, values] : by_class) {
    const int n = static_cast<int>(values.size());
    out.push_back({cls, order_free_mean(std::move(values)), n, 0.0});
  }
  return out;
}

}  // namespace osim
