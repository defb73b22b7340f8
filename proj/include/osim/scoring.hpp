#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "osim/baselines.hpp"
#include "osim/error.hpp"
#include "osim/image.hpp"
#include "osim/inference.hpp"
#include "osim/json.hpp"
#include "osim/metric.hpp"
#include "osim/parallel.hpp"
#include "osim/saliency.hpp"

namespace osim {

inline constexpr const char* kReportSchema = "osim-report/1";
#ifdef OSIM_VERSION
inline constexpr const char* kToolVersion = OSIM_VERSION;
#else
inline constexpr const char* kToolVersion = "0.0.0";
#endif

struct OsimValue {
  double value = 0.0;
  bool unweighted_fallback = false;
};

/// Saliency-weighted mean of the per-class indices. Falls back to the plain
/// mean of o when every class weight is zero.
inline OsimValue compute_osim_detailed(std::span<const ClassAggregate> aggregates) {
  if (aggregates.empty()) fail(ErrorKind::EmptyRecordSet, "no class aggregates");
  double num = 0.0, den = 0.0, plain = 0.0;
  double lo = 1.0, hi = 0.0;
  for (const auto& a : aggregates) {
    if (!(a.s_value >= 0.0)) fail(ErrorKind::InvalidConfig, "negative or NaN class saliency");
    num += a.s_value * a.o_value;
    den += a.s_value;
    plain += a.o_value;
    lo = std::min(lo, a.o_value);
    hi = std::max(hi, a.o_value);
  }
  OsimValue v;
  if (den > 0.0) {
    v.value = num / den;
  } else {
    v.value = plain / static_cast<double>(aggregates.size());
    v.unweighted_fallback = true;
  }
  v.value = std::clamp(v.value, lo, hi);
  return v;
}

inline double compute_osim(std::span<const ClassAggregate> aggregates) {
  return compute_osim_detailed(aggregates).value;
}

enum class SaliencyMode { Gbvs, Uniform, External };

inline std::string to_string(SaliencyMode m) {
  switch (m) {
    case SaliencyMode::Gbvs: return "gbvs";
    case SaliencyMode::Uniform: return "uniform";
    case SaliencyMode::External: return "file";
  }
  return "gbvs";
}

inline SaliencyMode parse_saliency_mode(const std::string& s) {
  if (s == "gbvs") return SaliencyMode::Gbvs;
  if (s == "uniform") return SaliencyMode::Uniform;
  if (s == "file") return SaliencyMode::External;
  fail(ErrorKind::InvalidConfig, "unknown saliency mode '" + s + "' (gbvs|uniform|file)");
}

struct EvaluationOptions {
  SaliencyMode saliency_mode = SaliencyMode::Gbvs;
  SaliencyConfig saliency;
  int parallelism = 1;
  bool baselines = true;
  SsimParams ssim;
};

/// One positional view pair. `external_saliency` is required in
/// SaliencyMode::External and is given at the reference image's resolution.
struct ScenePair {
  std::string ref_label;
  std::string test_label;
  Image ref;
  Image test;
  std::optional<Image> external_saliency;
};

struct ObjectRecord {
  int image_index = 0;
  int object_index = 0;
  int class_id = 0;
  double confidence = 0.0;
  PixelBox bbox;
  FeatBox feat_box;
  double r_value = 0.0;
  double s_value = 0.0;
};

struct PatchBaselines {
  double psnr = 0.0;
  double ssim = 0.0;
  int patch_count = 0;
};

struct EvaluationReport {
  std::string scene;
  std::string method;
  double osim = 0.0;
  std::vector<ClassAggregate> per_class;
  std::vector<ObjectRecord> per_object;
  std::vector<std::pair<std::string, std::string>> image_pairs;
  std::vector<std::string> warnings;
  std::vector<std::string> class_names;
  std::string fingerprint;
  json config;
  std::optional<BaselineScores> whole_image;
  std::optional<PatchBaselines> bbox_patch;
  std::map<std::string, double> external;
  std::optional<std::string> generated_at;

  /// Recomputes the weighted mean from per_class.
  double recomputed_osim() const { return compute_osim(per_class); }
};

/// Names of the rule choices that affect scores; embedded in reports and
/// the fingerprint.
inline json scoring_rules() {
  return json{{"bbox_mapping", "floor-inclusive"},
              {"cosine", "clamp-0-1"},
              {"zero_vector", "both-zero=1,one-zero=0"},
              {"boxes_from", "reference-detections"},
              {"empty_reference_views", "exclude-and-warn"},
              {"patch_aggregation", "uniform-mean-over-patches"},
              {"patch_psnr", "mean-of-finite-per-patch-psnr"},
              {"saliency_frame", "detector-input"}};
}

inline json saliency_config_json(SaliencyMode mode, const SaliencyConfig& s) {
  json j{{"mode", to_string(mode)}};
  if (mode == SaliencyMode::Gbvs)
    j["gbvs"] = json{{"intensity", s.intensity},
                     {"color", s.color},
                     {"orientation", s.orientation},
                     {"orientations_deg", s.orientations_deg},
                     {"graph_sigma", s.graph_sigma},
                     {"normalization_sigma", s.normalization_sigma},
                     {"power_iterations", s.power_iterations},
                     {"tolerance", s.tolerance},
                     {"map_resolution", s.map_resolution}};
  return j;
}

inline json model_config_json(const InferenceBackend& backend) {
  const ModelConfig& m = backend.config();
  const FeatureShape fs = backend.feature_shape();
  return json{{"backend", backend.identity()},
              {"input_width", m.input_width},
              {"input_height", m.input_height},
              {"confidence_threshold", m.confidence_threshold},
              {"nms_iou_threshold", m.nms_iou_threshold},
              {"feature_layer", m.feature_layer},
              {"feature_shape", {fs.width, fs.height, fs.depth}},
              {"head_strides", m.head_strides},
              {"letterbox_pad", 114},
              {"class_names", m.class_names}};
}

/// Canonical config (keys sorted by the JSON object model) and its hash.
inline std::pair<json, std::string> fingerprint_config(const InferenceBackend& backend,
                                                       const EvaluationOptions& opt) {
  json cfg{{"model", model_config_json(backend)},
           {"saliency", saliency_config_json(opt.saliency_mode, opt.saliency)},
           {"rules", scoring_rules()},
           {"ssim", {{"window", opt.ssim.window}, {"sigma", opt.ssim.sigma}, {"k1", opt.ssim.k1}, {"k2", opt.ssim.k2}}}};
  return {cfg, hex64(fnv1a64(cfg.dump()))};
}

/// Letterboxes an externally supplied saliency map with zero padding.
inline Image letterbox_map(const Image& map, const ModelConfig& cfg) {
  const Image gray = to_gray(map);
  const double scale = std::min(static_cast<double>(cfg.input_width) / gray.width,
                                static_cast<double>(cfg.input_height) / gray.height);
  const int rw = std::clamp(static_cast<int>(gray.width * scale), 1, cfg.input_width);
  const int rh = std::clamp(static_cast<int>(gray.height * scale), 1, cfg.input_height);
  const Image resized = (gray.width == rw && gray.height == rh) ? gray : resize_bilinear(gray, rw, rh);
  Image out(cfg.input_width, cfg.input_height, 1, 0.0f);
  for (int y = 0; y < rh; ++y)
    for (int x = 0; x < rw; ++x) out.at(x, y) = resized.at(x, y);
  return out;
}

namespace detail {

struct ViewResult {
  std::vector<ObjectRecord> objects;
  std::vector<std::string> warnings;
  std::optional<BaselineScores> whole;
  TensorImage ref_tensor;
  TensorImage test_tensor;
  std::vector<Detection> detections;
};

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace detail

/// Full pipeline over positional view pairs: detection and features on
/// every reference view, features on every test view, per-object indices
/// and saliency, per-class aggregation and the saliency-weighted OSIM.
inline EvaluationReport evaluate_scene(std::span<const ScenePair> pairs, InferenceBackend& backend,
                                       const EvaluationOptions& opt) {
  if (pairs.empty()) fail(ErrorKind::PairingMismatch, "scene has no view pairs");
  const ModelConfig& mc = backend.config();
  const FeatureShape fshape = backend.feature_shape();
  if (opt.saliency_mode == SaliencyMode::Gbvs) opt.saliency.validate();

  std::vector<detail::ViewResult> views(pairs.size());
  parallel_for(pairs.size(), opt.parallelism, [&](std::size_t i) {
    const ScenePair& p = pairs[i];
    detail::ViewResult& v = views[i];
    if (opt.baselines) {
      detail::require_same_dims(p.ref, p.test);
      BaselineScores b;
      b.psnr = psnr(p.ref, p.test);
      b.ssim = ssim(p.ref, p.test, opt.ssim);
      b.ms_ssim = ms_ssim(p.ref, p.test, opt.ssim);
      v.whole = b;
    }
    v.ref_tensor = preprocess(p.ref, mc);
    v.test_tensor = preprocess(p.test, mc);
    v.detections = backend.detect(v.ref_tensor);
    if (v.detections.empty()) {
      v.warnings.push_back("view " + std::to_string(i) + " (" + p.ref_label +
                           "): no objects detected in the reference; view excluded");
      return;
    }
    const FeatureMap fref = backend.extract_features(v.ref_tensor);
    const FeatureMap ftest = backend.extract_features(v.test_tensor);
    if (FeatureShape{fref.width, fref.height, fref.depth} != fshape || !fref.same_shape(ftest))
      fail(ErrorKind::ShapeMismatch, "feature map shape differs from the backend's declared shape");

    SaliencyMap sal;
    switch (opt.saliency_mode) {
      case SaliencyMode::Gbvs: sal = compute_saliency(v.ref_tensor.pixels, opt.saliency); break;
      case SaliencyMode::Uniform: sal = uniform_saliency(mc.input_width, mc.input_height); break;
      case SaliencyMode::External:
        if (!p.external_saliency)
          fail(ErrorKind::FileNotFound, "external saliency map missing for view " + std::to_string(i));
        sal = saliency_from_image(letterbox_map(*p.external_saliency, mc));
        break;
    }
    for (const auto& w : sal.warnings) v.warnings.push_back("view " + std::to_string(i) + ": " + w);

    for (std::size_t j = 0; j < v.detections.size(); ++j) {
      const Detection& d = v.detections[j];
      ObjectRecord rec;
      rec.image_index = static_cast<int>(i);
      rec.object_index = static_cast<int>(j);
      rec.class_id = d.class_id;
      rec.confidence = d.confidence;
      rec.bbox = d.bbox;
      rec.feat_box = map_bbox_to_featmap(d.bbox, mc.input_width, mc.input_height, fref.width, fref.height);
      rec.r_value = object_index_value(fref, ftest, rec.feat_box);
      rec.s_value = object_saliency(sal, d.bbox);
      v.objects.push_back(rec);
    }
  });

  EvaluationReport report;
  report.class_names = mc.class_names;
  std::tie(report.config, report.fingerprint) = fingerprint_config(backend, opt);
  std::vector<ObjectIndexRecord> index_records;
  std::vector<std::pair<int, double>> saliency_records;
  for (std::size_t i = 0; i < views.size(); ++i) {
    report.image_pairs.emplace_back(pairs[i].ref_label, pairs[i].test_label);
    for (auto& w : views[i].warnings) report.warnings.push_back(std::move(w));
    for (const auto& o : views[i].objects) {
      report.per_object.push_back(o);
      index_records.push_back({o.image_index, o.object_index, o.class_id, o.r_value});
      saliency_records.emplace_back(o.class_id, o.s_value);
    }
  }
  if (index_records.empty())
    fail(ErrorKind::NoObjectsDetected, "no objects detected in any reference view; OSIM is undefined");

  report.per_class = collect_class_indices(index_records);
  const auto s_by_class = class_saliency(saliency_records);
  for (std::size_t k = 0; k < report.per_class.size(); ++k) report.per_class[k].s_value = s_by_class[k].second;
  const OsimValue ov = compute_osim_detailed(report.per_class);
  report.osim = ov.value;
  if (ov.unweighted_fallback)
    report.warnings.push_back("all class saliency weights are zero; OSIM is the unweighted mean of class indices");

  if (opt.baselines) {
    std::vector<double> ps, ss, ms;
    std::vector<PatchView> patch_views;
    for (const auto& v : views) {
      ps.push_back(v.whole->psnr);
      ss.push_back(v.whole->ssim);
      ms.push_back(v.whole->ms_ssim);
      if (!v.detections.empty())
        patch_views.push_back({&v.ref_tensor.pixels, &v.test_tensor.pixels, v.detections});
    }
    BaselineScores whole;
    whole.psnr = detail::mean_of(ps);
    whole.ssim = detail::mean_of(ss);
    whole.ms_ssim = detail::mean_of(ms);
    report.whole_image = whole;

    const PatchScore pp = patch_metric(patch_views, PatchMetric::Psnr, opt.ssim);
    const PatchScore sp = patch_metric(patch_views, PatchMetric::Ssim, opt.ssim);
    report.bbox_patch = PatchBaselines{pp.value, sp.value, sp.patch_count};
    for (const auto& w : pp.warnings) report.warnings.push_back(w);
  }
  return report;
}

// --- JSON --------------------------------------------------------------

/// JSON has no infinity; +inf is written as the string "+inf".
inline json number_or_inf(double v) {
  if (std::isinf(v)) return v > 0 ? "+inf" : "-inf";
  return v;
}

inline double parse_number_or_inf(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "+inf" || s == "inf") return kInfinity;
    if (s == "-inf") return -kInfinity;
    fail(ErrorKind::MalformedRow, "expected a number or \"+inf\", got \"" + s + "\"");
  }
  return j.get<double>();
}

inline json report_to_json(const EvaluationReport& r) {
  auto name = [&](int cls) {
    return cls >= 0 && cls < static_cast<int>(r.class_names.size()) ? r.class_names[static_cast<std::size_t>(cls)]
                                                                     : std::to_string(cls);
  };
  json per_class = json::array();
  for (const auto& c : r.per_class)
    per_class.push_back(
        {{"class_id", c.class_id}, {"class_name", name(c.class_id)}, {"o", c.o_value}, {"s", c.s_value}, {"count", c.count}});
  json per_object = json::array();
  for (const auto& o : r.per_object)
    per_object.push_back({{"image_index", o.image_index},
                          {"object_index", o.object_index},
                          {"class_id", o.class_id},
                          {"class_name", name(o.class_id)},
                          {"confidence", o.confidence},
                          {"bbox", o.bbox},
                          {"feat_box", {o.feat_box.x1, o.feat_box.y1, o.feat_box.x2, o.feat_box.y2}},
                          {"r", o.r_value},
                          {"s", o.s_value}});
  json pairs = json::array();
  for (const auto& [ref, test] : r.image_pairs) pairs.push_back({{"ref", ref}, {"test", test}});

  json j{{"schema", kReportSchema},
         {"tool_version", kToolVersion},
         {"scene", r.scene},
         {"method", r.method},
         {"osim", r.osim},
         {"per_class", per_class},
         {"per_object", per_object},
         {"image_pairs", pairs},
         {"warnings", r.warnings},
         {"fingerprint", r.fingerprint},
         {"config", r.config}};
  json baselines = json::object();
  if (r.whole_image)
    baselines["whole_image"] = {{"psnr", number_or_inf(r.whole_image->psnr)},
                                {"ssim", r.whole_image->ssim},
                                {"ms_ssim", r.whole_image->ms_ssim}};
  if (r.bbox_patch)
    baselines["bbox_patch"] = {{"psnr", number_or_inf(r.bbox_patch->psnr)},
                               {"ssim", r.bbox_patch->ssim},
                               {"patch_count", r.bbox_patch->patch_count}};
  j["baselines"] = baselines;
  json ext = json::object();
  for (const auto& [k, v] : r.external) ext[k] = number_or_inf(v);
  j["external"] = ext;
  if (r.generated_at) j["generated_at"] = *r.generated_at;
  return j;
}

inline EvaluationReport report_from_json(const json& j) {
  if (j.value("schema", "") != kReportSchema) fail(ErrorKind::MalformedRow, "not an osim-report/1 document");
  EvaluationReport r;
  try {
    r.scene = j.value("scene", "");
    r.method = j.value("method", "");
    r.osim = j.at("osim").get<double>();
    r.fingerprint = j.value("fingerprint", "");
    r.config = j.value("config", json::object());
    r.warnings = j.value("warnings", std::vector<std::string>{});
    for (const auto& c : j.at("per_class")) {
      ClassAggregate a{c.at("class_id").get<int>(), c.at("o").get<double>(), c.at("count").get<int>(),
                       c.at("s").get<double>()};
      r.per_class.push_back(a);
      const auto id = static_cast<std::size_t>(a.class_id);
      if (r.class_names.size() <= id) r.class_names.resize(id + 1);
      r.class_names[id] = c.value("class_name", std::to_string(a.class_id));
    }
    for (const auto& o : j.at("per_object")) {
      ObjectRecord rec;
      rec.image_index = o.at("image_index").get<int>();
      rec.object_index = o.at("object_index").get<int>();
      rec.class_id = o.at("class_id").get<int>();
      rec.confidence = o.value("confidence", 0.0);
      rec.bbox = o.at("bbox").get<PixelBox>();
      const auto fb = o.at("feat_box").get<std::vector<int>>();
      if (fb.size() == 4) rec.feat_box = {fb[0], fb[1], fb[2], fb[3]};
      rec.r_value = o.at("r").get<double>();
      rec.s_value = o.at("s").get<double>();
      r.per_object.push_back(rec);
    }
    for (const auto& p : j.value("image_pairs", json::array()))
      r.image_pairs.emplace_back(p.at("ref").get<std::string>(), p.at("test").get<std::string>());
    if (j.contains("baselines")) {
      const auto& b = j["baselines"];
      if (b.contains("whole_image")) {
        BaselineScores w;
        w.psnr = parse_number_or_inf(b["whole_image"].at("psnr"));
        w.ssim = b["whole_image"].at("ssim").get<double>();
        w.ms_ssim = b["whole_image"].at("ms_ssim").get<double>();
        r.whole_image = w;
      }
      if (b.contains("bbox_patch"))
        r.bbox_patch = PatchBaselines{parse_number_or_inf(b["bbox_patch"].at("psnr")),
                                      b["bbox_patch"].at("ssim").get<double>(),
                                      b["bbox_patch"].value("patch_count", 0)};
    }
    const json ext = j.value("external", json::object());
    for (const auto& [k, v] : ext.items()) r.external[k] = parse_number_or_inf(v);
    if (j.contains("generated_at")) r.generated_at = j["generated_at"].get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorKind::MalformedRow, std::string("report: ") + e.what());
  }
  return r;
}

// --- overlay -------------------------------------------------------------

struct OverlayThreshold {
  /// Unset: use the report's scene-level OSIM.
  std::optional<double> fixed;
};

/// Copies `ref` (original resolution) and alpha-blends a red mask (alpha
/// 0.4) over every box of `image_index` whose class index o_l is strictly
/// below the threshold. Boxes are mapped from detector input space back to
/// the original image through `transform`; overlapping boxes are blended
/// once.
inline Image render_low_quality_overlay(const EvaluationReport& report, int image_index, const Image& ref,
                                        const LetterboxTransform& transform, OverlayThreshold threshold = {}) {
  const double t = threshold.fixed.value_or(report.osim);
  std::map<int, double> o_by_class;
  for (const auto& c : report.per_class) o_by_class[c.class_id] = c.o_value;
  Image out = to_rgb(ref);
  std::vector<char> mask(out.pixel_count(), 0);
  bool any = false;
  for (const auto& o : report.per_object) {
    if (o.image_index != image_index) continue;
    const auto it = o_by_class.find(o.class_id);
    if (it == o_by_class.end() || !(it->second < t)) continue;
    LetterboxTransform t = transform;
    t.source_width = out.width;
    t.source_height = out.height;
    const PixelBox b = to_source_box(o.bbox, t);
    const int x1 = b.x1, y1 = b.y1, x2 = b.x2, y2 = b.y2;
    for (int y = y1; y <= y2; ++y)
      for (int x = x1; x <= x2; ++x) mask[static_cast<std::size_t>(y) * out.width + x] = 1;
    any = true;
  }
  if (!any) return out;
  constexpr float kAlpha = 0.4f;
  constexpr float kRed[3] = {1.0f, 0.0f, 0.0f};
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      if (mask[static_cast<std::size_t>(y) * out.width + x])
        for (int c = 0; c < 3; ++c) out.at(x, y, c) = (1.0f - kAlpha) * out.at(x, y, c) + kAlpha * kRed[c];
  return out;
}

}  // namespace osim
