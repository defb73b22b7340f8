#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "osim/harness.hpp"
#include "osim/parallel.hpp"
#include "osim/scoring.hpp"

namespace osim {

/// Result of blurring the detected objects of one view cumulatively,
/// smallest first. Step k (0..K) has k objects blurred; step K+1 is the
/// full-image anchor.
struct DegradationStudy {
  DegradationPlan plan;                 // boxes in source-image pixels
  std::vector<double> object_saliency;  // s_{i,j} of each plan entry, plan order
  std::vector<MetricSeries> series;     // osim, psnr, ssim, ms_ssim, patch_psnr, patch_ssim
  std::vector<std::string> warnings;

  const MetricSeries& get(const std::string& metric) const {
    for (const auto& s : series)
      if (s.metric == metric) return s;
    fail(ErrorKind::UnknownColumn, "no series '" + metric + "'");
  }

  /// Step whose object is the most salient (1-based: the step that blurs it).
  int most_salient_step() const {
    if (object_saliency.empty()) return 0;
    return static_cast<int>(std::max_element(object_saliency.begin(), object_saliency.end()) -
                            object_saliency.begin()) + 1;
  }
};

/// Step k in 1..K whose drop v[k-1] - v[k] is largest (first on ties).
inline int largest_drop_step(const std::vector<double>& v, int last_object_step) {
  int best = 0;
  double drop = -std::numeric_limits<double>::infinity();
  for (int k = 1; k <= last_object_step && k < static_cast<int>(v.size()); ++k) {
    const double d = v[static_cast<std::size_t>(k - 1)] - v[static_cast<std::size_t>(k)];
    if (d > drop) {
      drop = d;
      best = k;
    }
  }
  return best;
}

inline DegradationStudy run_degradation_study(const Image& ref, InferenceBackend& backend,
                                              const EvaluationOptions& opt, double sigma) {
  const TensorImage t = preprocess(ref, backend.config());
  const auto detections = backend.detect(t);
  if (detections.empty()) fail(ErrorKind::NoObjectsDetected, "no objects detected in the reference image");
  std::vector<PixelBox> boxes;
  for (const auto& d : detections) boxes.push_back(to_source_box(d.bbox, t.transform));

  DegradationStudy study;
  study.plan = make_degradation_plan(boxes, sigma);
  const int steps = study.plan.full_image_step() + 1;

  EvaluationOptions inner = opt;
  inner.parallelism = 1;
  std::vector<EvaluationReport> reports(static_cast<std::size_t>(steps));
  parallel_for(reports.size(), opt.parallelism, [&](std::size_t k) {
    ScenePair p{"ref", "step" + std::to_string(k), ref, apply_object_blur(ref, study.plan, static_cast<int>(k)), {}};
    reports[k] = evaluate_scene(std::span<const ScenePair>(&p, 1), backend, inner);
  });

  for (int idx : study.plan.source_index) {
    const auto& objs = reports.front().per_object;
    const auto it = std::find_if(objs.begin(), objs.end(), [&](const ObjectRecord& o) { return o.object_index == idx; });
    study.object_saliency.push_back(it != objs.end() ? it->s_value : 0.0);
  }

  auto collect = [&](const std::string& name, auto&& get) {
    std::vector<double> raw;
    for (const auto& r : reports) raw.push_back(get(r));
    try {
      study.series.push_back(normalize_degradation_curve(name, raw));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DegenerateAnchors) throw;
      study.series.push_back({name, raw, std::vector<double>(raw.size(), 1.0)});
      study.warnings.push_back(name + ": curve is flat; normalized values set to 1");
    }
  };
  collect("osim", [](const EvaluationReport& r) { return r.osim; });
  if (opt.baselines) {
    collect("psnr", [](const EvaluationReport& r) { return r.whole_image->psnr; });
    collect("ssim", [](const EvaluationReport& r) { return r.whole_image->ssim; });
    collect("ms_ssim", [](const EvaluationReport& r) { return r.whole_image->ms_ssim; });
    collect("patch_psnr", [](const EvaluationReport& r) { return r.bbox_patch->psnr; });
    collect("patch_ssim", [](const EvaluationReport& r) { return r.bbox_patch->ssim; });
  }
  return study;
}

}  // namespace osim
