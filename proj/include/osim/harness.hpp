#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "osim/error.hpp"
#include "osim/image.hpp"
#include "osim/inference.hpp"
#include "osim/io.hpp"
#include "osim/json.hpp"

namespace osim {

// --- splits and poses ------------------------------------------------------

struct SplitSpec {
  int n = 8;
  std::uint64_t seed = 0;  // reserved
};

template <class T>
struct Split {
  std::vector<T> train;
  std::vector<T> test;
  std::vector<std::string> warnings;
};

/// Every n-th item (starting at 0) goes to test, the rest to train.
template <class T>
Split<T> split_dataset(const std::vector<T>& items, const SplitSpec& spec = {}) {
  if (spec.n < 2) fail(ErrorKind::InvalidConfig, "split stride must be >= 2");
  if (items.empty()) fail(ErrorKind::InvalidConfig, "cannot split an empty list");
  Split<T> s;
  for (std::size_t i = 0; i < items.size(); ++i)
    (i % static_cast<std::size_t>(spec.n) == 0 ? s.test : s.train).push_back(items[i]);
  if (s.train.empty()) s.warnings.push_back("split leaves no training images");
  return s;
}

struct PoseGrid {
  double tau = 15.0;
  double elevation_min = -90.0;
  double elevation_max = 90.0;
  bool dedupe_poles = true;

  void validate() const {
    if (!(tau > 0.0)) fail(ErrorKind::InvalidConfig, "pose grid tau must be positive");
    const double k = 360.0 / tau;
    if (std::abs(k - std::round(k)) > 1e-9) fail(ErrorKind::InvalidConfig, "360 must be a multiple of tau");
    if (elevation_min > elevation_max || elevation_min < -90.0 || elevation_max > 90.0)
      fail(ErrorKind::InvalidConfig, "elevation range must lie within [-90, 90]");
  }
};

struct Pose {
  double elevation = 0.0;
  double azimuth = 0.0;
  bool operator==(const Pose&) const = default;
};

/// Elevations step by tau from the lower bound (inclusive of the upper bound
/// when it lands on the grid), azimuths cover [0, 360). At the poles every
/// azimuth is the same camera, so with dedupe_poles they emit one pose.
inline std::vector<Pose> pose_grid(const PoseGrid& g) {
  g.validate();
  const int azimuths = static_cast<int>(std::lround(360.0 / g.tau));
  const int rows = static_cast<int>(std::floor((g.elevation_max - g.elevation_min) / g.tau + 1e-9)) + 1;
  std::vector<Pose> out;
  for (int r = 0; r < rows; ++r) {
    const double elev = g.elevation_min + r * g.tau;
    const bool pole = std::abs(std::abs(elev) - 90.0) < 1e-9;
    const int n = (pole && g.dedupe_poles) ? 1 : azimuths;
    for (int a = 0; a < n; ++a) out.push_back({elev, a * g.tau});
  }
  return out;
}

// --- degradation -------------------------------------------------------------

struct DegradationPlan {
  std::vector<PixelBox> order;  // small to large
  std::vector<int> source_index;  // position of each entry in the input list
  double blur_sigma = 5.0;

  int object_count() const noexcept { return static_cast<int>(order.size()); }
  /// Steps 0..K blur that many objects; K+1 blurs the whole image.
  int full_image_step() const noexcept { return object_count() + 1; }
};

/// Orders boxes by pixel area, ties by (x1, y1).
inline DegradationPlan make_degradation_plan(const std::vector<PixelBox>& boxes, double sigma) {
  if (sigma < 0.0 || !std::isfinite(sigma)) fail(ErrorKind::InvalidConfig, "blur sigma must be >= 0");
  std::vector<int> idx(boxes.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    const auto& A = boxes[static_cast<std::size_t>(a)];
    const auto& B = boxes[static_cast<std::size_t>(b)];
    if (A.area() != B.area()) return A.area() < B.area();
    if (A.x1 != B.x1) return A.x1 < B.x1;
    return A.y1 < B.y1;
  });
  DegradationPlan p;
  p.blur_sigma = sigma;
  for (int i : idx) {
    p.order.push_back(boxes[static_cast<std::size_t>(i)]);
    p.source_index.push_back(i);
  }
  return p;
}

/// Blurs the first `step` objects of the plan (boxes in `image` pixel
/// coordinates). The blur is computed over the whole image and copied into
/// the boxes, so object edges see their real surroundings. Pixels outside
/// the selected boxes are untouched.
inline Image apply_object_blur(const Image& image, const DegradationPlan& plan, int step) {
  if (step < 0 || step > plan.full_image_step())
    fail(ErrorKind::StepOutOfRange,
         "step " + std::to_string(step) + " outside [0, " + std::to_string(plan.full_image_step()) + "]");
  if (step == 0 || plan.blur_sigma <= 0.0) return image;
  const Image blurred = gaussian_blur(image, plan.blur_sigma);
  if (step == plan.full_image_step()) return blurred;
  Image out = image;
  for (int k = 0; k < step; ++k) {
    const PixelBox b = plan.order[static_cast<std::size_t>(k)];
    const int x1 = std::max(0, b.x1), y1 = std::max(0, b.y1);
    const int x2 = std::min(image.width - 1, b.x2), y2 = std::min(image.height - 1, b.y2);
    for (int y = y1; y <= y2; ++y)
      for (int x = x1; x <= x2; ++x)
        for (int c = 0; c < image.channels; ++c) out.at(x, y, c) = blurred.at(x, y, c);
  }
  return out;
}

// --- normalization -------------------------------------------------------------

/// v' = (v - full) / (best - full), both anchors already oriented so that
/// higher is better.
inline std::vector<double> normalize_series(const std::vector<double>& raw, double best, double full_degraded) {
  const double span = best - full_degraded;
  if (span == 0.0 || !std::isfinite(span))
    fail(ErrorKind::DegenerateAnchors, "normalization anchors coincide or are not finite");
  std::vector<double> out;
  out.reserve(raw.size());
  for (double v : raw) out.push_back((v - full_degraded) / span);
  return out;
}

inline std::vector<double> denormalize_series(const std::vector<double>& norm, double best, double full_degraded) {
  const double span = best - full_degraded;
  if (span == 0.0 || !std::isfinite(span))
    fail(ErrorKind::DegenerateAnchors, "normalization anchors coincide or are not finite");
  std::vector<double> out;
  out.reserve(norm.size());
  for (double v : norm) out.push_back(v * span + full_degraded);
  return out;
}

struct MetricSeries {
  std::string metric;
  std::vector<double> raw;
  std::vector<double> normalized;
};

/// Normalizes a degradation curve: best anchor is the highest finite value,
/// the degraded anchor the last (full-image) step. +inf entries (PSNR of an
/// untouched image) map to 1. `higher_is_better = false` orients by 1 - v.
inline MetricSeries normalize_degradation_curve(std::string metric, const std::vector<double>& raw,
                                                bool higher_is_better = true) {
  if (raw.size() < 2) fail(ErrorKind::InvalidConfig, "degradation curve needs at least two steps");
  MetricSeries s{std::move(metric), raw, {}};
  std::vector<double> oriented;
  for (double v : raw) oriented.push_back(higher_is_better ? v : 1.0 - v);
  double best = -std::numeric_limits<double>::infinity();
  for (double v : oriented)
    if (std::isfinite(v)) best = std::max(best, v);
  const double full = oriented.back();
  std::vector<double> finite = oriented;
  for (double& v : finite)
    if (std::isinf(v)) v = best;
  s.normalized = normalize_series(finite, best, full);
  return s;
}

enum class LeaderboardRule { Identity, DivideByMax, OneMinus, OneMinusOverMax, MosScale };

inline LeaderboardRule parse_leaderboard_rule(const std::string& s) {
  if (s == "identity") return LeaderboardRule::Identity;
  if (s == "divide_by_max") return LeaderboardRule::DivideByMax;
  if (s == "one_minus") return LeaderboardRule::OneMinus;
  if (s == "one_minus_over_max") return LeaderboardRule::OneMinusOverMax;
  if (s == "mos_scale") return LeaderboardRule::MosScale;
  fail(ErrorKind::InvalidConfig, "unknown leaderboard rule '" + s + "'");
}

/// Column -> rule. Overridable from JSON ({"column": "rule", ...}).
inline std::map<std::string, LeaderboardRule> default_leaderboard_rules() {
  return {{"psnr", LeaderboardRule::DivideByMax},    {"ssim", LeaderboardRule::Identity},
          {"ms_ssim", LeaderboardRule::Identity},    {"lpips", LeaderboardRule::OneMinus},
          {"clip_sim", LeaderboardRule::Identity},   {"fid", LeaderboardRule::OneMinusOverMax},
          {"cd", LeaderboardRule::OneMinus},         {"mos", LeaderboardRule::MosScale},
          {"osim", LeaderboardRule::Identity},       {"patch_psnr", LeaderboardRule::DivideByMax},
          {"patch_ssim", LeaderboardRule::Identity}};
}

inline std::map<std::string, LeaderboardRule> leaderboard_rules_from_json(const json& j) {
  auto rules = default_leaderboard_rules();
  for (const auto& [k, v] : j.items()) rules[k] = parse_leaderboard_rule(v.get<std::string>());
  return rules;
}

inline std::vector<double> normalize_for_leaderboard(const std::string& column, const std::vector<double>& values,
                                                     const std::map<std::string, LeaderboardRule>& rules =
                                                         default_leaderboard_rules()) {
  const auto it = rules.find(column);
  if (it == rules.end()) fail(ErrorKind::UnknownColumn, "no leaderboard rule for column '" + column + "'");
  double mx = 0.0;
  for (double v : values) mx = std::max(mx, v);
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) {
    switch (it->second) {
      case LeaderboardRule::Identity: out.push_back(v); break;
      case LeaderboardRule::OneMinus: out.push_back(1.0 - v); break;
      case LeaderboardRule::MosScale: out.push_back((v - 1.0) / 4.0); break;
      case LeaderboardRule::DivideByMax:
      case LeaderboardRule::OneMinusOverMax: {
        if (!(mx > 0.0)) fail(ErrorKind::DegenerateAnchors, "column '" + column + "' has no positive maximum");
        const double r = v / mx;
        out.push_back(it->second == LeaderboardRule::DivideByMax ? r : 1.0 - r);
        break;
      }
    }
  }
  return out;
}

// --- statistics --------------------------------------------------------------

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) fail(ErrorKind::LengthMismatch, "pearson: series lengths differ");
  if (x.size() < 3) fail(ErrorKind::LengthMismatch, "pearson: need at least 3 points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) fail(ErrorKind::ConstantSeries, "pearson: constant series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// 1-based ranks; ties share the mean of the ranks they span.
inline std::vector<double> mid_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double mean = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = mean;
    i = j + 1;
  }
  return r;
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) fail(ErrorKind::LengthMismatch, "spearman: series lengths differ");
  if (x.size() < 3) fail(ErrorKind::LengthMismatch, "spearman: need at least 3 points");
  return pearson(mid_ranks(x), mid_ranks(y));
}

// --- MOS ---------------------------------------------------------------------

struct MosTable {
  std::map<std::pair<std::string, std::string>, double> entries;  // (scene, model)
  std::vector<std::string> warnings;
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

/// Parses "scene,model,mos" CSV text. Duplicate keys are averaged.
inline MosTable parse_mos(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool header = false;
  std::map<std::pair<std::string, std::string>, std::vector<double>> raw;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (!header) {
      if (cells.size() != 3 || cells[0] != "scene" || cells[1] != "model" || cells[2] != "mos")
        fail(ErrorKind::MalformedRow, "line 1: header must be scene,model,mos");
      header = true;
      continue;
    }
    const std::string where = "line " + std::to_string(lineno);
    if (cells.size() != 3 || cells[0].empty() || cells[1].empty())
      fail(ErrorKind::MalformedRow, where + ": expected scene,model,mos");
    char* end = nullptr;
    const double v = std::strtod(cells[2].c_str(), &end);
    if (cells[2].empty() || end != cells[2].c_str() + cells[2].size() || !std::isfinite(v))
      fail(ErrorKind::MalformedRow, where + ": mos '" + cells[2] + "' is not a number");
    if (v < 1.0 || v > 5.0) fail(ErrorKind::OutOfRangeMOS, where + ": mos " + cells[2] + " outside [1, 5]");
    raw[{cells[0], cells[1]}].push_back(v);
  }
  if (!header) fail(ErrorKind::MalformedRow, "empty MOS file");
  MosTable t;
  for (const auto& [key, vals] : raw) {
    double s = 0.0;
    for (double v : vals) s += v;
    t.entries[key] = s / static_cast<double>(vals.size());
    if (vals.size() > 1)
      t.warnings.push_back("MOS for (" + key.first + ", " + key.second + ") given " + std::to_string(vals.size()) +
                           " times; averaged");
  }
  return t;
}

inline MosTable ingest_mos(const std::filesystem::path& csv_path) { return parse_mos(io::read_text(csv_path)); }

// --- correlation tables ------------------------------------------------------

/// Scores of one model on one scene, keyed by column name.
struct ScoreRow {
  std::string scene;
  std::string model;
  std::map<std::string, double> scores;
};

inline bool lower_is_better(const std::string& column) {
  return column == "lpips" || column == "fid" || column == "cd";
}

struct CorrelationEntry {
  std::string metric;
  double pearson = 0.0;
  double spearman = 0.0;
  int scenes = 0;
};

struct CorrelationTable {
  std::vector<CorrelationEntry> entries;
  std::vector<std::string> warnings;
};

/// Per scene, correlates each metric column with MOS across models, then
/// averages over scenes. Lower-is-better columns are negated first; models
/// in `excluded` are dropped. Scenes with fewer than 3 usable models or a
/// constant column are skipped with a warning.
inline CorrelationTable correlate_with_mos(std::vector<ScoreRow> rows, const MosTable& mos,
                                           const std::vector<std::string>& excluded = {}) {
  std::sort(rows.begin(), rows.end(),
            [](const ScoreRow& a, const ScoreRow& b) { return std::tie(a.scene, a.model) < std::tie(b.scene, b.model); });
  CorrelationTable out;
  std::map<std::string, std::vector<const ScoreRow*>> by_scene;
  std::vector<std::string> metrics;
  for (const auto& r : rows) {
    if (std::find(excluded.begin(), excluded.end(), r.model) != excluded.end()) continue;
    if (!mos.entries.contains({r.scene, r.model})) {
      out.warnings.push_back("no MOS for (" + r.scene + ", " + r.model + ")");
      continue;
    }
    by_scene[r.scene].push_back(&r);
    for (const auto& [k, v] : r.scores)
      if (std::find(metrics.begin(), metrics.end(), k) == metrics.end()) metrics.push_back(k);
  }
  for (const auto& [key, v] : mos.entries) {
    if (std::find(excluded.begin(), excluded.end(), key.second) != excluded.end()) continue;
    const bool found = std::any_of(rows.begin(), rows.end(),
                                   [&](const ScoreRow& r) { return r.scene == key.first && r.model == key.second; });
    if (!found) out.warnings.push_back("no report for (" + key.first + ", " + key.second + ")");
  }
  std::sort(metrics.begin(), metrics.end());
  for (const auto& m : metrics) {
    CorrelationEntry e{m, 0.0, 0.0, 0};
    for (const auto& [scene, list] : by_scene) {
      std::vector<double> x, y;
      for (const ScoreRow* r : list) {
        const auto it = r->scores.find(m);
        if (it == r->scores.end() || !std::isfinite(it->second)) continue;
        x.push_back(lower_is_better(m) ? -it->second : it->second);
        y.push_back(mos.entries.at({r->scene, r->model}));
      }
      if (x.size() < 3) {
        out.warnings.push_back(m + " @ " + scene + ": fewer than 3 models; skipped");
        continue;
      }
      try {
        const double p = pearson(x, y), s = spearman(x, y);
        e.pearson += p;
        e.spearman += s;
        ++e.scenes;
      } catch (const Error& err) {
        if (err.kind() != ErrorKind::ConstantSeries) throw;
        out.warnings.push_back(m + " @ " + scene + ": constant series; skipped");
      }
    }
    if (e.scenes > 0) {
      e.pearson /= e.scenes;
      e.spearman /= e.scenes;
      out.entries.push_back(e);
    }
  }
  return out;
}

}  // namespace osim
