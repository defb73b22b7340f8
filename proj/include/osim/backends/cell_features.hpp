#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "osim/error.hpp"
#include "osim/image.hpp"
#include "osim/inference.hpp"

namespace osim {

/// Deterministic, weight-free stand-in for a detector feature layer. Each
/// stride x stride cell of the input yields a descriptor made of
///   - 4x4 sub-block mean intensities relative to the cell mean (layout),
///   - 4x4 sub-block mean absolute x/y gradients (fine texture),
///   - the cell's mean red-green and blue-yellow opponency (colour).
/// Blur removes the texture part first, so cosine similarity against the
/// sharp cell drops with blur strength.
class CellFeatureExtractor {
 public:
  static constexpr int kSubBlocks = 4;
  static constexpr int kDepth = kSubBlocks * kSubBlocks * 3 + 2;

  explicit CellFeatureExtractor(int stride = 32, double texture_gain = 4.0)
      : stride_(stride), texture_gain_(texture_gain) {
    if (stride_ < kSubBlocks || stride_ % kSubBlocks != 0)
      fail(ErrorKind::InvalidConfig, "cell stride must be a positive multiple of 4");
  }

  int stride() const noexcept { return stride_; }

  FeatureShape shape_for(int width, int height) const noexcept {
    return {std::max(1, width / stride_), std::max(1, height / stride_), kDepth};
  }

  FeatureMap extract(const Image& rgb) const {
    if (rgb.empty()) fail(ErrorKind::EmptyImage, "feature extraction on empty image");
    const Image gray = to_gray(rgb);
    const FeatureShape s = shape_for(rgb.width, rgb.height);
    FeatureMap f(s.width, s.height, s.depth);
    const int sub = stride_ / kSubBlocks;
    auto g = [&](int x, int y) -> double {
      return gray.at(std::clamp(x, 0, gray.width - 1), std::clamp(y, 0, gray.height - 1));
    };
    for (int cy = 0; cy < s.height; ++cy)
      for (int cx = 0; cx < s.width; ++cx) {
        auto cell = f.cell(cx, cy);
        const int ox = cx * stride_, oy = cy * stride_;
        double block_mean[kSubBlocks * kSubBlocks] = {};
        double cell_mean = 0.0, rg = 0.0, by = 0.0;
        int n = 0;
        for (int by_i = 0; by_i < kSubBlocks; ++by_i)
          for (int bx_i = 0; bx_i < kSubBlocks; ++bx_i) {
            double mean = 0.0, gx = 0.0, gy = 0.0;
            int m = 0;
            for (int y = oy + by_i * sub; y < oy + (by_i + 1) * sub; ++y)
              for (int x = ox + bx_i * sub; x < ox + (bx_i + 1) * sub; ++x) {
                const double v = g(x, y);
                mean += v;
                gx += std::abs(g(x + 1, y) - g(x - 1, y)) * 0.5;
                gy += std::abs(g(x, y + 1) - g(x, y - 1)) * 0.5;
                const int px = std::min(x, rgb.width - 1), py = std::min(y, rgb.height - 1);
                const double r = rgb.at(px, py, 0);
                const double gr = rgb.at(px, py, std::min(1, rgb.channels - 1));
                const double b = rgb.at(px, py, std::min(2, rgb.channels - 1));
                rg += r - gr;
                by += b - 0.5 * (r + gr);
                ++m;
              }
            const int k = by_i * kSubBlocks + bx_i;
            block_mean[k] = mean / m;
            cell_mean += mean;
            n += m;
            cell[static_cast<std::size_t>(kSubBlocks * kSubBlocks + 2 * k)] = static_cast<float>(texture_gain_ * gx / m);
            cell[static_cast<std::size_t>(kSubBlocks * kSubBlocks + 2 * k + 1)] =
                static_cast<float>(texture_gain_ * gy / m);
          }
        cell_mean /= n;
        for (int k = 0; k < kSubBlocks * kSubBlocks; ++k)
          cell[static_cast<std::size_t>(k)] = static_cast<float>(block_mean[k] - cell_mean);
        cell[kDepth - 2] = static_cast<float>(rg / n);
        cell[kDepth - 1] = static_cast<float>(by / n);
      }
    f.check_valid();
    return f;
  }

 private:
  int stride_;
  double texture_gain_;
};

}  // namespace osim
