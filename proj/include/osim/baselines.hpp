#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "osim/error.hpp"
#include "osim/image.hpp"
#include "osim/inference.hpp"

namespace osim {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

enum class BaselineScope { WholeImage, BboxPatch };

struct BaselineScores {
  double psnr = 0.0;  // dB; +inf when the inputs are identical
  double ssim = 0.0;
  double ms_ssim = 0.0;
  BaselineScope scope = BaselineScope::WholeImage;
  int patch_count = 0;
};

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

namespace detail {

inline void require_same_dims(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels)
    fail(ErrorKind::DimensionMismatch, "images differ in size or channel count");
  if (a.empty()) fail(ErrorKind::EmptyImage, "empty image");
}

/// Valid-mode separable Gaussian filtering of a single-channel plane.
inline std::vector<double> filter_valid(const std::vector<double>& plane, int w, int h, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int ow = w - n + 1, oh = h - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[static_cast<std::size_t>(i)] * plane[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

struct SsimTerms {
  double ssim = 0.0;  // mean of the full SSIM map
  double cs = 0.0;    // mean of the contrast-structure map
};

inline SsimTerms ssim_plane(const std::vector<double>& a, const std::vector<double>& b, int w, int h,
                            const SsimParams& p) {
  const int radius = p.window / 2;
  const auto k = gaussian_kernel(p.sigma, radius);
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = filter_valid(a, w, h, k), mu_b = filter_valid(b, w, h, k);
  const auto s_aa = filter_valid(aa, w, h, k), s_bb = filter_valid(bb, w, h, k), s_ab = filter_valid(ab, w, h, k);
  const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
  const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
  double sum = 0.0, sum_cs = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = s_aa[i] - ma * ma, vb = s_bb[i] - mb * mb, cov = s_ab[i] - ma * mb;
    const double cs = (2.0 * cov + c2) / (va + vb + c2);
    sum_cs += cs;
    sum += ((2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1)) * cs;
  }
  const double n = static_cast<double>(mu_a.size());
  return {sum / n, sum_cs / n};
}

inline std::vector<double> channel_plane(const Image& img, int c) {
  std::vector<double> out(img.pixel_count());
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) out[static_cast<std::size_t>(y) * img.width + x] = img.at(x, y, c);
  return out;
}

inline SsimTerms ssim_terms(const Image& a, const Image& b, const SsimParams& p) {
  SsimTerms t;
  for (int c = 0; c < a.channels; ++c) {
    const auto r = ssim_plane(channel_plane(a, c), channel_plane(b, c), a.width, a.height, p);
    t.ssim += r.ssim;
    t.cs += r.cs;
  }
  t.ssim /= a.channels;
  t.cs /= a.channels;
  return t;
}

/// 2x2 box downsampling (odd trailing row/column dropped).
inline Image halve(const Image& img) {
  Image out(std::max(1, img.width / 2), std::max(1, img.height / 2), img.channels);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(x, y, c) = 0.25f * (img.at(2 * x, 2 * y, c) + img.at(2 * x + 1, 2 * y, c) +
                                   img.at(2 * x, 2 * y + 1, c) + img.at(2 * x + 1, 2 * y + 1, c));
  return out;
}

}  // namespace detail

/// Peak signal-to-noise ratio on [0,1] pixels (MAX = 1). Identical inputs
/// return +inf.
inline double psnr(const Image& ref, const Image& test) {
  detail::require_same_dims(ref, test);
  double sse = 0.0;
  for (std::size_t i = 0; i < ref.data.size(); ++i) {
    const double d = static_cast<double>(ref.data[i]) - test.data[i];
    sse += d * d;
  }
  const double mse = sse / static_cast<double>(ref.data.size());
  if (mse == 0.0) return kInfinity;
  return 10.0 * std::log10(1.0 / mse);
}

/// Mean SSIM over all window positions fully inside the image, averaged
/// across channels.
inline double ssim(const Image& ref, const Image& test, const SsimParams& p = {}) {
  detail::require_same_dims(ref, test);
  if (ref.width < p.window || ref.height < p.window)
    fail(ErrorKind::TooSmall, "image smaller than the SSIM window");
  return detail::ssim_terms(ref, test, p).ssim;
}

/// Multi-scale SSIM with the standard five-scale exponents. Scales whose
/// image would fall below the window are dropped and the remaining
/// exponents renormalized; contrast-structure terms are clamped at 0
/// before exponentiation.
inline double ms_ssim(const Image& ref, const Image& test, const SsimParams& p = {}) {
  detail::require_same_dims(ref, test);
  if (ref.width < p.window || ref.height < p.window)
    fail(ErrorKind::TooSmall, "image smaller than the SSIM window");
  static constexpr std::array<double, 5> kWeights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  int scales = 1;
  for (int w = ref.width / 2, h = ref.height / 2; scales < 5 && w >= p.window && h >= p.window; w /= 2, h /= 2)
    ++scales;
  double wsum = 0.0;
  for (int s = 0; s < scales; ++s) wsum += kWeights[static_cast<std::size_t>(s)];

  Image a = ref, b = test;
  double result = 1.0;
  for (int s = 0; s < scales; ++s) {
    const auto t = detail::ssim_terms(a, b, p);
    const double w = kWeights[static_cast<std::size_t>(s)] / wsum;
    const double term = (s == scales - 1) ? t.ssim : t.cs;
    result *= std::pow(std::max(term, 0.0), w);
    if (s + 1 < scales) {
      a = detail::halve(a);
      b = detail::halve(b);
    }
  }
  return result;
}

enum class PatchMetric { Psnr, Ssim };

struct PatchScore {
  double value = 0.0;
  int patch_count = 0;
  int excluded_infinite = 0;
  std::vector<std::string> warnings;
};

/// Per-view reference/test pair in detector input space plus the reference
/// detections that select the patches.
struct PatchView {
  const Image* ref = nullptr;
  const Image* test = nullptr;
  std::span<const Detection> detections;
};

/// Upscales a patch so that its shorter side reaches `min_side`.
inline Image upscale_to_min_side(const Image& patch, int min_side) {
  const int shorter = std::min(patch.width, patch.height);
  if (shorter >= min_side) return patch;
  const double f = static_cast<double>(min_side) / shorter;
  const int w = std::max(min_side, static_cast<int>(std::ceil(patch.width * f)));
  const int h = std::max(min_side, static_cast<int>(std::ceil(patch.height * f)));
  return resize_bilinear(patch, w, h);
}

/// Metric over every detected bbox crop, averaged uniformly over all
/// (view, object) pairs. PSNR patches that are pixel-identical (+inf) are
/// excluded from the mean and reported in warnings.
inline PatchScore patch_metric(std::span<const PatchView> views, PatchMetric metric, const SsimParams& p = {}) {
  PatchScore out;
  double sum = 0.0;
  int finite = 0;
  for (const auto& v : views) {
    detail::require_same_dims(*v.ref, *v.test);
    for (const auto& d : v.detections) {
      const Image a = crop(*v.ref, d.bbox), b = crop(*v.test, d.bbox);
      ++out.patch_count;
      if (metric == PatchMetric::Psnr) {
        const double s = psnr(a, b);
        if (std::isinf(s)) {
          ++out.excluded_infinite;
          continue;
        }
        sum += s;
      } else {
        sum += ssim(upscale_to_min_side(a, p.window), upscale_to_min_side(b, p.window), p);
      }
      ++finite;
    }
  }
  if (out.patch_count == 0) fail(ErrorKind::NoObjectsDetected, "no detections to cut patches from");
  if (out.excluded_infinite > 0)
    out.warnings.push_back("patch psnr: " + std::to_string(out.excluded_infinite) +
                           " identical patch(es) excluded from the mean");
  out.value = finite > 0 ? sum / finite : kInfinity;
  return out;
}

}  // namespace osim
