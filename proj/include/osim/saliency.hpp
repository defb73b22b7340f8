#pragma once

// Graph-based visual saliency. Feature maps live on a coarse grid; a
// Markov chain per map settles on locally distinctive cells (activation),
// a second chain pulls that mass towards activation peaks (normalization),
// and the normalized maps are summed across channels.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "osim/error.hpp"
#include "osim/image.hpp"
#include "osim/inference.hpp"
#include "osim/metric.hpp"

namespace osim {

struct SaliencyConfig {
  bool intensity = true;
  bool color = true;
  bool orientation = true;
  std::vector<double> orientations_deg = {0.0, 45.0, 90.0, 135.0};
  /// Edge-weight locality of the activation graph, in grid cells.
  double graph_sigma = 0.15 * 32;
  /// Edge-weight locality of the normalization graph, in grid cells.
  double normalization_sigma = 0.06 * 32;
  int power_iterations = 200;
  double tolerance = 1e-6;
  /// Grid cells along the longer image side.
  int map_resolution = 32;

  void validate() const {
    if (power_iterations < 1) fail(ErrorKind::InvalidConfig, "power_iterations must be >= 1");
    if (!(tolerance > 0.0)) fail(ErrorKind::InvalidConfig, "tolerance must be > 0");
    if (map_resolution < 8) fail(ErrorKind::InvalidConfig, "map_resolution must be >= 8");
    if (!(graph_sigma > 0.0) || !(normalization_sigma > 0.0))
      fail(ErrorKind::InvalidConfig, "graph sigmas must be > 0");
    if (!intensity && !color && !orientation) fail(ErrorKind::InvalidConfig, "no saliency channel enabled");
  }
};

/// Per-pixel attention weights in [0, 1], max-normalized.
struct SaliencyMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;
  bool uniform_fallback = false;
  bool converged = true;
  std::vector<std::string> warnings;

  float at(int x, int y) const noexcept { return values[static_cast<std::size_t>(y) * width + x]; }
};

inline SaliencyMap uniform_saliency(int width, int height) {
  if (width <= 0 || height <= 0) fail(ErrorKind::InvalidConfig, "saliency map dimensions must be positive");
  SaliencyMap m;
  m.width = width;
  m.height = height;
  m.values.assign(static_cast<std::size_t>(width) * height, 1.0f);
  return m;
}

namespace gbvs {

/// A scalar map on the coarse grid, row-major.
struct Grid {
  int cols = 0;
  int rows = 0;
  std::vector<double> v;

  std::size_t size() const noexcept { return v.size(); }
};

struct ChainTrace {
  int iterations = 0;
  bool converged = false;
  /// |sum(pi) - 1| after every iteration.
  std::vector<double> mass_error;
};

enum class EdgeRule {
  /// w(i -> j) = |M_i - M_j| * F(i, j)
  Dissimilarity,
  /// w(i -> j) = M_j * F(i, j)
  TargetMass,
};

inline std::pair<int, int> grid_dims(int width, int height, int resolution) {
  if (width >= height)
    return {resolution, std::max(1, static_cast<int>(std::lround(static_cast<double>(resolution) * height / width)))};
  return {std::max(1, static_cast<int>(std::lround(static_cast<double>(resolution) * width / height))), resolution};
}

/// Area-average of one image channel (or of a derived per-pixel value) onto
/// the grid.
template <class PixelFn>
Grid area_average(int width, int height, int cols, int rows, PixelFn&& value) {
  Grid g{cols, rows, std::vector<double>(static_cast<std::size_t>(cols) * rows, 0.0)};
  for (int gy = 0; gy < rows; ++gy) {
    const int y0 = static_cast<int>(static_cast<long long>(gy) * height / rows);
    const int y1 = std::max(y0 + 1, static_cast<int>(static_cast<long long>(gy + 1) * height / rows));
    for (int gx = 0; gx < cols; ++gx) {
      const int x0 = static_cast<int>(static_cast<long long>(gx) * width / cols);
      const int x1 = std::max(x0 + 1, static_cast<int>(static_cast<long long>(gx + 1) * width / cols));
      double s = 0.0;
      for (int y = y0; y < std::min(y1, height); ++y)
        for (int x = x0; x < std::min(x1, width); ++x) s += value(x, y);
      g.v[static_cast<std::size_t>(gy) * cols + gx] = s / ((std::min(y1, height) - y0) * (std::min(x1, width) - x0));
    }
  }
  return g;
}

/// Row-stochastic transition matrix (dense, n x n, row-major) for the given
/// map and edge rule. Rows with no outgoing weight become self-loops.
/// Returns the total edge weight alongside, which callers use to detect
/// featureless maps.
inline std::pair<std::vector<double>, double> transition_matrix(const Grid& m, double sigma, EdgeRule rule) {
  const std::size_t n = m.size();
  std::vector<double> p(n * n, 0.0);
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int ix = static_cast<int>(i % m.cols), iy = static_cast<int>(i / m.cols);
    double row_sum = 0.0;
    double* row = p.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const int dx = ix - static_cast<int>(j % m.cols), dy = iy - static_cast<int>(j / m.cols);
      const double f = std::exp(-(dx * dx + dy * dy) * inv2s2);
      const double w = rule == EdgeRule::Dissimilarity ? std::abs(m.v[i] - m.v[j]) * f : m.v[j] * f;
      row[j] = w;
      row_sum += w;
    }
    total += row_sum;
    if (row_sum > 0.0) {
      for (std::size_t j = 0; j < n; ++j) row[j] /= row_sum;
    } else {
      row[i] = 1.0;
    }
  }
  return {std::move(p), total};
}

/// Stationary distribution of the lazy chain (P + I) / 2, which has the same
/// equilibrium as P but cannot oscillate on bipartite graphs (a bright
/// patch on a flat background yields exactly such a graph). Starts from the
/// uniform distribution; stops when the L1 change drops below `tolerance`.
inline std::vector<double> stationary_distribution(std::span<const double> p, std::size_t n, int max_iterations,
                                                   double tolerance, ChainTrace* trace = nullptr) {
  std::vector<double> pi(n, 1.0 / static_cast<double>(n)), next(n);
  ChainTrace local;
  for (int it = 0; it < max_iterations; ++it) {
    for (std::size_t j = 0; j < n; ++j) next[j] = 0.5 * pi[j];
    for (std::size_t i = 0; i < n; ++i) {
      const double w = 0.5 * pi[i];
      if (w == 0.0) continue;
      const double* row = p.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) next[j] += w * row[j];
    }
    double diff = 0.0, mass = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      diff += std::abs(next[j] - pi[j]);
      mass += next[j];
    }
    pi.swap(next);
    local.iterations = it + 1;
    local.mass_error.push_back(std::abs(mass - 1.0));
    if (diff < tolerance) {
      local.converged = true;
      break;
    }
  }
  if (trace) *trace = std::move(local);
  return pi;
}

/// Activation followed by normalization for one feature map. Returns an
/// empty grid when the map carries no dissimilarity mass.
inline Grid activate_and_normalize(const Grid& feature, const SaliencyConfig& cfg, bool& converged,
                                   std::vector<ChainTrace>* traces = nullptr) {
  auto [p_act, mass] = transition_matrix(feature, cfg.graph_sigma, EdgeRule::Dissimilarity);
  if (mass < 1e-12) return {};
  ChainTrace t1, t2;
  Grid act{feature.cols, feature.rows,
           stationary_distribution(p_act, feature.size(), cfg.power_iterations, cfg.tolerance, &t1)};
  auto [p_norm, norm_mass] = transition_matrix(act, cfg.normalization_sigma, EdgeRule::TargetMass);
  (void)norm_mass;
  Grid out{feature.cols, feature.rows,
           stationary_distribution(p_norm, feature.size(), cfg.power_iterations, cfg.tolerance, &t2)};
  converged = converged && t1.converged && t2.converged;
  if (traces) {
    traces->push_back(std::move(t1));
    traces->push_back(std::move(t2));
  }
  return out;
}

/// Even/odd Gabor energy of `gray` at angle theta, sampled per pixel.
inline std::vector<double> gabor_energy(const Image& gray, double theta_deg, double wavelength, double sigma) {
  const int r = static_cast<int>(std::ceil(2.5 * sigma));
  const double th = theta_deg * std::numbers::pi / 180.0;
  const double ct = std::cos(th), st = std::sin(th);
  const std::size_t ks = static_cast<std::size_t>(2 * r + 1);
  std::vector<double> even(ks * ks), odd(ks * ks);
  double even_mean = 0.0;
  for (int y = -r; y <= r; ++y)
    for (int x = -r; x <= r; ++x) {
      const double u = x * ct + y * st;
      const double g = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
      const std::size_t k = static_cast<std::size_t>(y + r) * ks + static_cast<std::size_t>(x + r);
      even[k] = g * std::cos(2.0 * std::numbers::pi * u / wavelength);
      odd[k] = g * std::sin(2.0 * std::numbers::pi * u / wavelength);
      even_mean += even[k];
    }
  even_mean /= static_cast<double>(ks * ks);
  for (double& e : even) e -= even_mean;  // zero DC so flat regions respond 0

  std::vector<double> out(gray.pixel_count());
  for (int y = 0; y < gray.height; ++y)
    for (int x = 0; x < gray.width; ++x) {
      double se = 0.0, so = 0.0;
      for (int dy = -r; dy <= r; ++dy) {
        const int yy = std::clamp(y + dy, 0, gray.height - 1);
        for (int dx = -r; dx <= r; ++dx) {
          const int xx = std::clamp(x + dx, 0, gray.width - 1);
          const double v = gray.at(xx, yy);
          const std::size_t k = static_cast<std::size_t>(dy + r) * ks + static_cast<std::size_t>(dx + r);
          se += even[k] * v;
          so += odd[k] * v;
        }
      }
      out[static_cast<std::size_t>(y) * gray.width + x] = std::sqrt(se * se + so * so);
    }
  return out;
}

/// Bilinear upsample of the grid to pixel resolution (cell centres aligned).
inline std::vector<double> upsample(const Grid& g, int width, int height) {
  std::vector<double> out(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * g.rows / height - 0.5, 0.0, g.rows - 1.0);
    const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, g.rows - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * g.cols / width - 0.5, 0.0, g.cols - 1.0);
      const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, g.cols - 1);
      const double wx = fx - x0;
      auto at = [&](int cx, int cy) { return g.v[static_cast<std::size_t>(cy) * g.cols + cx]; };
      out[static_cast<std::size_t>(y) * width + x] =
          (1 - wy) * ((1 - wx) * at(x0, y0) + wx * at(x1, y0)) + wy * ((1 - wx) * at(x0, y1) + wx * at(x1, y1));
    }
  }
  return out;
}

/// Raw channel feature maps on the grid, grouped by channel family.
inline std::vector<std::vector<Grid>> channel_maps(const Image& rgb, const SaliencyConfig& cfg) {
  const auto [cols, rows] = grid_dims(rgb.width, rgb.height, cfg.map_resolution);
  const int w = rgb.width, h = rgb.height;
  auto colour = [&](int x, int y, int c) -> double { return rgb.at(x, y, std::min(c, rgb.channels - 1)); };
  std::vector<std::vector<Grid>> groups;

  if (cfg.intensity) {
    groups.push_back({area_average(w, h, cols, rows, [&](int x, int y) {
      return (colour(x, y, 0) + colour(x, y, 1) + colour(x, y, 2)) / 3.0;
    })});
  }
  if (cfg.color && rgb.channels >= 3) {
    auto opponent = [&](int x, int y, bool red_green) {
      const double r = colour(x, y, 0), g = colour(x, y, 1), b = colour(x, y, 2);
      const double mx = std::max({r, g, b});
      if (mx < 1e-6) return 0.0;
      return red_green ? (r - g) / mx : (b - std::min(r, g)) / mx;
    };
    groups.push_back({area_average(w, h, cols, rows, [&](int x, int y) { return opponent(x, y, true); }),
                      area_average(w, h, cols, rows, [&](int x, int y) { return opponent(x, y, false); })});
  }
  if (cfg.orientation && !cfg.orientations_deg.empty()) {
    // Gabor filtering on a 4x-grid-resolution gray image.
    const Image gray = to_gray(rgb);
    const Image small = resize_bilinear(gray, cols * 4, rows * 4);
    std::vector<Grid> maps;
    for (double angle : cfg.orientations_deg) {
      const auto energy = gabor_energy(small, angle, 4.0, 2.0);
      maps.push_back(area_average(small.width, small.height, cols, rows,
                                  [&](int x, int y) { return energy[static_cast<std::size_t>(y) * small.width + x]; }));
    }
    groups.push_back(std::move(maps));
  }
  return groups;
}

}  // namespace gbvs

/// Saliency of an image in detector input space.
inline SaliencyMap compute_saliency(const Image& image, const SaliencyConfig& cfg,
                                    std::vector<gbvs::ChainTrace>* traces = nullptr) {
  cfg.validate();
  if (image.empty()) fail(ErrorKind::EmptyImage, "saliency of an empty image");
  const auto groups = gbvs::channel_maps(image, cfg);
  const auto [cols, rows] = gbvs::grid_dims(image.width, image.height, cfg.map_resolution);
  gbvs::Grid total{cols, rows, std::vector<double>(static_cast<std::size_t>(cols) * rows, 0.0)};
  bool converged = true;
  bool any = false;
  for (const auto& group : groups) {
    gbvs::Grid sum{cols, rows, std::vector<double>(total.size(), 0.0)};
    int used = 0;
    for (const auto& feature : group) {
      const auto normalized = gbvs::activate_and_normalize(feature, cfg, converged, traces);
      if (normalized.v.empty()) continue;
      for (std::size_t k = 0; k < sum.size(); ++k) sum.v[k] += normalized.v[k];
      ++used;
    }
    if (used == 0) continue;
    any = true;
    for (std::size_t k = 0; k < total.size(); ++k) total.v[k] += sum.v[k] / used;
  }

  if (!any) {
    SaliencyMap u = uniform_saliency(image.width, image.height);
    u.uniform_fallback = true;
    u.warnings.push_back("saliency: image has no feature contrast; using uniform map");
    return u;
  }
  const auto up = gbvs::upsample(total, image.width, image.height);
  const double mx = *std::max_element(up.begin(), up.end());
  SaliencyMap m;
  m.width = image.width;
  m.height = image.height;
  if (!(mx > 0.0)) {
    m = uniform_saliency(image.width, image.height);
    m.uniform_fallback = true;
    m.warnings.push_back("saliency: zero map; using uniform map");
    return m;
  }
  m.values.resize(up.size());
  for (std::size_t k = 0; k < up.size(); ++k) m.values[k] = static_cast<float>(up[k] / mx);
  m.converged = converged;
  if (!converged)
    m.warnings.push_back("saliency: power iteration hit the iteration cap before reaching tolerance");
  return m;
}

/// Max-normalizes an externally supplied single-channel map that is already
/// in detector input space.
inline SaliencyMap saliency_from_image(const Image& gray) {
  if (gray.empty()) fail(ErrorKind::EmptyImage, "empty saliency image");
  const Image g = to_gray(gray);
  SaliencyMap m;
  m.width = g.width;
  m.height = g.height;
  m.values.assign(g.data.begin(), g.data.end());
  for (float& v : m.values) v = std::max(v, 0.0f);
  const float mx = *std::max_element(m.values.begin(), m.values.end());
  if (!(mx > 0.0f)) {
    m = uniform_saliency(g.width, g.height);
    m.uniform_fallback = true;
    m.warnings.push_back("saliency: external map is all zero; using uniform map");
    return m;
  }
  for (float& v : m.values) v /= mx;
  return m;
}

/// Mean saliency over the inclusive pixel box.
inline double object_saliency(const SaliencyMap& map, const PixelBox& box) {
  if (!box.fits(map.width, map.height)) fail(ErrorKind::BoxOutOfBounds, "bbox outside saliency map");
  double sum = 0.0;
  for (int y = box.y1; y <= box.y2; ++y)
    for (int x = box.x1; x <= box.x2; ++x) sum += map.at(x, y);
  return sum / static_cast<double>(box.area());
}

/// Per-class mean of per-object saliency, grouped like the class index.
inline std::vector<std::pair<int, double>> class_saliency(std::span<const std::pair<int, double>> per_object) {
  if (per_object.empty()) fail(ErrorKind::EmptyRecordSet, "no per-object saliency values");
  std::map<int, std::vector<double>> by_class;
  for (const auto& [cls, s] : per_object) by_class[cls].push_back(s);
  std::vector<std::pair<int, double>> out;
  for (auto& [cls, values] : by_class) out.emplace_back(cls, order_free_mean(std::move(values)));
  return out;
}

}  // namespace osim
