#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "osim/error.hpp"

namespace osim {

/// Interleaved (HWC) floating-point image. Pixel values are nominally in
/// [0, 1]; nothing here clamps, so callers may carry shifted or negative
/// values through intermediate computations.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, int c, float fill = 0.0f)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  bool empty() const noexcept { return width <= 0 || height <= 0 || channels <= 0; }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width) * height; }

  std::size_t index(int x, int y, int c = 0) const noexcept {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  float& at(int x, int y, int c = 0) noexcept { return data[index(x, y, c)]; }
  float at(int x, int y, int c = 0) const noexcept { return data[index(x, y, c)]; }

  std::span<const float> pixel(int x, int y) const noexcept {
    return {data.data() + index(x, y), static_cast<std::size_t>(channels)};
  }

  bool operator==(const Image&) const = default;
};

using DecodedImage = Image;

/// Inclusive integer pixel rectangle.
struct PixelBox {
  int x1 = 0;
  int y1 = 0;
  int x2 = 0;
  int y2 = 0;

  int width() const noexcept { return x2 - x1 + 1; }
  int height() const noexcept { return y2 - y1 + 1; }
  long long area() const noexcept { return static_cast<long long>(width()) * height(); }
  bool contains(int x, int y) const noexcept { return x >= x1 && x <= x2 && y >= y1 && y <= y2; }
  bool fits(int w, int h) const noexcept {
    return x1 >= 0 && y1 >= 0 && x1 <= x2 && y1 <= y2 && x2 < w && y2 < h;
  }
  bool operator==(const PixelBox&) const = default;
};

/// Bilinear resize with half-pixel centre alignment (the same sampling
/// grid as OpenCV's INTER_LINEAR, without its fixed-point rounding).
inline Image resize_bilinear(const Image& src, int out_w, int out_h) {
  if (src.empty() || out_w <= 0 || out_h <= 0) fail(ErrorKind::EmptyImage, "resize of empty image");
  Image dst(out_w, out_h, src.channels);
  const double sx = static_cast<double>(src.width) / out_w;
  const double sy = static_cast<double>(src.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(src.height - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(src.width - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < src.channels; ++c) {
        const double top = (1.0 - wx) * src.at(x0, y0, c) + wx * src.at(x1, y0, c);
        const double bot = (1.0 - wx) * src.at(x0, y1, c) + wx * src.at(x1, y1, c);
        dst.at(x, y, c) = static_cast<float>((1.0 - wy) * top + wy * bot);
      }
    }
  }
  return dst;
}

inline Image crop(const Image& src, const PixelBox& box) {
  if (!box.fits(src.width, src.height)) fail(ErrorKind::BoxOutOfBounds, "crop box outside image");
  Image out(box.width(), box.height(), src.channels);
  for (int y = 0; y < out.height; ++y) {
    const float* row = src.data.data() + src.index(box.x1, box.y1 + y);
    std::copy_n(row, static_cast<std::size_t>(out.width) * src.channels,
                out.data.data() + out.index(0, y));
  }
  return out;
}

/// Converts to a single luma-like channel with equal RGB weights. Alpha is
/// ignored; single-channel images are returned unchanged.
inline Image to_gray(const Image& src) {
  if (src.channels == 1) return src;
  Image out(src.width, src.height, 1);
  const int colour = std::min(src.channels, 3);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x) {
      double s = 0.0;
      for (int c = 0; c < colour; ++c) s += src.at(x, y, c);
      out.at(x, y) = static_cast<float>(s / colour);
    }
  return out;
}

/// Normalized 1-D Gaussian taps for the given sigma and radius.
inline std::vector<double> gaussian_kernel(double sigma, int radius) {
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-(i * i) / (2.0 * sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (double& v : k) v /= sum;
  return k;
}

/// Separable Gaussian blur with kernel radius ceil(3 sigma) and replicated
/// borders. The vertical pass is accumulated in double precision.
inline Image gaussian_blur(const Image& src, double sigma) {
  if (sigma <= 0.0 || src.empty()) return src;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  const auto k = gaussian_kernel(sigma, radius);
  const int w = src.width, h = src.height, ch = src.channels;
  std::vector<double> tmp(src.data.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int xx = std::clamp(x + i, 0, w - 1);
          acc += k[static_cast<std::size_t>(i + radius)] * src.at(xx, y, c);
        }
        tmp[src.index(x, y, c)] = acc;
      }
  Image out(w, h, ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int yy = std::clamp(y + i, 0, h - 1);
          acc += k[static_cast<std::size_t>(i + radius)] * tmp[src.index(x, yy, c)];
        }
        out.at(x, y, c) = static_cast<float>(acc);
      }
  return out;
}

/// 64-bit FNV-1a over raw bytes.
inline std::uint64_t fnv1a64(std::span<const std::byte> bytes,
                             std::uint64_t seed = 0xcbf29ce484222325ULL) noexcept {
  std::uint64_t h = seed;
  for (std::byte b : bytes) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL) noexcept {
  return fnv1a64(std::as_bytes(std::span(s.data(), s.size())), seed);
}

/// Content digest of an image after quantizing to 8 bits, so images that
/// decode to the same 8-bit pixels hash identically.
inline std::uint64_t image_digest(const Image& img) noexcept {
  std::vector<std::uint8_t> q(img.data.size());
  for (std::size_t i = 0; i < q.size(); ++i)
    q[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img.data[i], 0.0f, 1.0f) * 255.0f));
  std::uint32_t dims[3] = {static_cast<std::uint32_t>(img.width), static_cast<std::uint32_t>(img.height),
                           static_cast<std::uint32_t>(img.channels)};
  const auto h = fnv1a64(std::as_bytes(std::span(dims)));
  return fnv1a64(std::as_bytes(std::span(q)), h);
}

}  // namespace osim
