#pragma once

#include <glob.h>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "osim/backends/fixture_backend.hpp"
#include "osim/backends/onnx_backend.hpp"
#include "osim/config.hpp"
#include "osim/harness.hpp"
#include "osim/io.hpp"
#include "osim/scoring.hpp"
#include "osim/study.hpp"

namespace osim::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitUndefined = 2;

inline int exit_code_for(const Error& e) { return e.kind() == ErrorKind::NoObjectsDetected ? kExitUndefined : kExitConfig; }

// --- scene layout --------------------------------------------------------------

/// Image files of a directory, ordered numerically by stem when every stem is
/// an integer, lexicographically otherwise.
inline std::vector<fs::path> list_images(const fs::path& dir) {
  static const std::set<std::string> exts = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"};
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) return files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (exts.contains(ext)) files.push_back(e.path());
  }
  const bool numeric = std::all_of(files.begin(), files.end(), [](const fs::path& p) {
    const auto s = p.stem().string();
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char ch) { return std::isdigit(ch); });
  });
  std::sort(files.begin(), files.end(), [&](const fs::path& a, const fs::path& b) {
    if (numeric) {
      const auto na = std::stoull(a.stem().string()), nb = std::stoull(b.stem().string());
      if (na != nb) return na < nb;
    }
    return a.filename() < b.filename();
  });
  return files;
}

/// `<scene>/ref/*`, `<scene>/test/*` paired by position, plus
/// `<scene>/saliency/*` when external saliency is requested.
inline std::vector<ScenePair> load_scene(const fs::path& scene, bool with_saliency) {
  if (!fs::is_directory(scene)) fail(ErrorKind::FileNotFound, "scene directory " + scene.string());
  const auto refs = list_images(scene / "ref");
  const auto tests = list_images(scene / "test");
  if (refs.empty()) fail(ErrorKind::PairingMismatch, scene.string() + ": no images in ref/");
  if (refs.size() != tests.size())
    fail(ErrorKind::PairingMismatch, scene.string() + ": ref/ has " + std::to_string(refs.size()) +
                                         " images but test/ has " + std::to_string(tests.size()));
  std::vector<fs::path> sal;
  if (with_saliency) {
    sal = list_images(scene / "saliency");
    if (sal.size() != refs.size())
      fail(ErrorKind::PairingMismatch, scene.string() + ": saliency/ must hold one map per reference view");
  }
  std::vector<ScenePair> pairs;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    ScenePair p;
    p.ref_label = "ref/" + refs[i].filename().string();
    p.test_label = "test/" + tests[i].filename().string();
    p.ref = io::load_image(refs[i]);
    p.test = io::load_image(tests[i]);
    if (with_saliency) p.external_saliency = io::load_image(sal[i]);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

inline std::unique_ptr<InferenceBackend> make_backend(const RunConfig& c) {
  if (c.backend == "fixture")
    return std::make_unique<FixtureBackend>(c.model.model_path, c.model.confidence_threshold, c.model.feature_layer);
  return std::make_unique<OnnxBackend>(c.model);
}

inline std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::vector<fs::path> expand_globs(const std::vector<std::string>& patterns) {
  std::vector<fs::path> out;
  for (const auto& p : patterns) {
    glob_t g{};
    const int rc = ::glob(p.c_str(), 0, nullptr, &g);
    if (rc == 0)
      for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
    globfree(&g);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline std::string fmt(double v, int prec = 6) {
  if (std::isinf(v)) return v > 0 ? "+inf" : "-inf";
  std::ostringstream s;
  s << std::setprecision(prec) << std::fixed << v;
  return s.str();
}

// --- commands ------------------------------------------------------------------

struct EvaluateArgs {
  bool overlay = false;
  std::optional<double> overlay_threshold;
};

inline int cmd_evaluate(const RunConfig& cfg, const EvaluateArgs& args, std::ostream& out, std::ostream& err) {
  cfg.validate(true);
  if (cfg.scenes.empty()) fail(ErrorKind::InvalidConfig, "no --scene given");
  auto backend = make_backend(cfg);
  const EvaluationOptions opt = cfg.evaluation_options();
  fs::create_directories(cfg.out_dir);
  int code = kExitOk;
  for (const auto& scene_dir : cfg.scenes) {
    const std::string name = fs::path(scene_dir).lexically_normal().filename().string().empty()
                                 ? fs::path(scene_dir).lexically_normal().parent_path().filename().string()
                                 : fs::path(scene_dir).lexically_normal().filename().string();
    try {
      const auto pairs = load_scene(scene_dir, opt.saliency_mode == SaliencyMode::External);
      EvaluationReport report = evaluate_scene(pairs, *backend, opt);
      report.scene = name;
      report.method = cfg.method;
      if (cfg.timestamp) report.generated_at = utc_timestamp();
      io::write_atomic(fs::path(cfg.out_dir) / (name + ".json"), report_to_json(report).dump(2) + "\n");
      for (const auto& w : report.warnings) err << "warning: " << name << ": " << w << "\n";
      out << name << "\tosim=" << fmt(report.osim) << "\tpsnr=" << fmt(report.whole_image->psnr, 3)
          << "\tssim=" << fmt(report.whole_image->ssim) << "\tms_ssim=" << fmt(report.whole_image->ms_ssim)
          << "\tobjects=" << report.per_object.size() << "\n";
      if (args.overlay) {
        OverlayThreshold th{args.overlay_threshold};
        for (std::size_t i = 0; i < pairs.size(); ++i) {
          const TensorImage t = preprocess(pairs[i].ref, backend->config());
          const Image ov = render_low_quality_overlay(report, static_cast<int>(i), pairs[i].ref, t.transform, th);
          io::save_image(fs::path(cfg.out_dir) / (name + "_overlay_" + std::to_string(i) + ".png"), ov);
        }
      }
    } catch (const Error& e) {
      err << "error: " << name << ": " << e.what() << "\n";
      code = std::max(code, exit_code_for(e));
    }
  }
  return code;
}

inline void write_series_csv(const fs::path& path, const std::vector<std::pair<int, DegradationStudy>>& studies,
                             const std::string& metric) {
  std::ostringstream s;
  s << "view,step,blurred_objects,raw,normalized\n";
  for (const auto& [view, st] : studies) {
    const auto& ser = st.get(metric);
    for (std::size_t k = 0; k < ser.raw.size(); ++k) {
      const int step = static_cast<int>(k);
      s << view << "," << step << ","
        << (step == st.plan.full_image_step() ? std::string("all") : std::to_string(step)) << ","
        << fmt(ser.raw[k], 9) << "," << fmt(ser.normalized[k], 9) << "\n";
    }
  }
  io::write_atomic(path, s.str());
}

struct DegradeArgs {
  std::string order = "area";
  std::optional<int> view;
};

inline int cmd_degrade(const RunConfig& cfg, const DegradeArgs& args, std::ostream& out, std::ostream& err) {
  if (args.order != "area") fail(ErrorKind::InvalidConfig, "only --order area is supported");
  cfg.validate(true);
  if (cfg.scenes.size() != 1) fail(ErrorKind::InvalidConfig, "degrade takes exactly one --scene");
  auto backend = make_backend(cfg);
  const fs::path scene = cfg.scenes.front();
  const auto refs = list_images(scene / "ref");
  if (refs.empty()) fail(ErrorKind::FileNotFound, (scene / "ref").string() + " has no images");
  EvaluationOptions opt = cfg.evaluation_options();
  if (opt.saliency_mode == SaliencyMode::External)
    fail(ErrorKind::InvalidConfig, "degrade supports gbvs or uniform saliency");
  const std::string name = scene.lexically_normal().filename().string();
  const fs::path dir = fs::path(cfg.out_dir) / name;
  fs::create_directories(dir);

  std::vector<std::pair<int, DegradationStudy>> studies;
  int code = kExitOk;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (args.view && *args.view != static_cast<int>(i)) continue;
    try {
      studies.emplace_back(static_cast<int>(i), run_degradation_study(io::load_image(refs[i]), *backend, opt, cfg.blur_sigma));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoObjectsDetected) throw;
      err << "warning: view " << i << ": " << e.what() << "\n";
      code = kExitUndefined;
    }
  }
  if (studies.empty()) {
    err << "error: no view of " << name << " has detections; nothing to degrade\n";
    return kExitUndefined;
  }
  json plot = json::array();
  for (const auto& [view, st] : studies) {
    for (const auto& w : st.warnings) err << "warning: view " << view << ": " << w << "\n";
    json series = json::object();
    for (const auto& s : st.series) {
      json raw = json::array();
      for (double v : s.raw) raw.push_back(number_or_inf(v));
      series[s.metric] = {{"raw", raw}, {"normalized", s.normalized}};
    }
    json order = json::array();
    for (std::size_t k = 0; k < st.plan.order.size(); ++k)
      order.push_back({{"bbox", st.plan.order[k]}, {"s", st.object_saliency[k]}});
    plot.push_back({{"view", view}, {"sigma", st.plan.blur_sigma}, {"objects", order}, {"series", series}});
    const auto& o = st.get("osim").normalized;
    out << name << " view " << view << " osim:";
    for (double v : o) out << " " << fmt(v, 4);
    out << "\n";
  }
  for (const auto& s : studies.front().second.series) write_series_csv(dir / ("degrade_" + s.metric + ".csv"), studies, s.metric);
  io::write_atomic(dir / "degrade.json", json{{"scene", name}, {"views", plot}}.dump(2) + "\n");
  return code;
}

/// Score columns read from a report: OSIM, both baseline scopes and any
/// external columns.
inline ScoreRow score_row(const EvaluationReport& r) {
  ScoreRow row{r.scene, r.method, {}};
  row.scores["osim"] = r.osim;
  if (r.whole_image) {
    row.scores["psnr"] = r.whole_image->psnr;
    row.scores["ssim"] = r.whole_image->ssim;
    row.scores["ms_ssim"] = r.whole_image->ms_ssim;
  }
  if (r.bbox_patch) {
    row.scores["patch_psnr"] = r.bbox_patch->psnr;
    row.scores["patch_ssim"] = r.bbox_patch->ssim;
  }
  for (const auto& [k, v] : r.external) row.scores[k] = v;
  return row;
}

inline std::vector<EvaluationReport> load_reports(const std::vector<std::string>& globs, std::ostream& err) {
  const auto files = expand_globs(globs);
  if (files.empty()) fail(ErrorKind::FileNotFound, "no report matches the given --reports patterns");
  std::vector<EvaluationReport> reports;
  std::set<std::string> fingerprints;
  for (const auto& f : files) {
    json j;
    try {
      j = json::parse(io::read_text(f));
    } catch (const json::exception& e) {
      fail(ErrorKind::MalformedRow, f.string() + ": " + e.what());
    }
    reports.push_back(report_from_json(j));
    if (reports.back().method.empty()) fail(ErrorKind::MalformedRow, f.string() + ": report has no method name");
    fingerprints.insert(reports.back().fingerprint);
  }
  if (fingerprints.size() > 1)
    err << "WARNING: reports were produced with " << fingerprints.size()
        << " different configurations (fingerprints differ); scores may not be comparable\n";
  return reports;
}

struct CorrelateArgs {
  std::string mos;
  std::vector<std::string> reports;
};

inline int cmd_correlate(const RunConfig& cfg, const CorrelateArgs& args, std::ostream& out, std::ostream& err) {
  if (cfg.parallelism < 1) fail(ErrorKind::InvalidConfig, "parallelism must be >= 1");
  const MosTable mos = ingest_mos(args.mos);
  for (const auto& w : mos.warnings) err << "warning: " << w << "\n";
  std::vector<ScoreRow> rows;
  for (const auto& r : load_reports(args.reports, err)) rows.push_back(score_row(r));
  const CorrelationTable table = correlate_with_mos(rows, mos, cfg.exclude);
  for (const auto& w : table.warnings) err << "warning: " << w << "\n";

  std::ostringstream csv;
  csv << "metric,pearson,spearman,scenes\n";
  json j = json::array();
  for (const auto& e : table.entries) {
    csv << e.metric << "," << fmt(e.pearson, 9) << "," << fmt(e.spearman, 9) << "," << e.scenes << "\n";
    j.push_back({{"metric", e.metric}, {"pearson", e.pearson}, {"spearman", e.spearman}, {"scenes", e.scenes}});
  }
  out << csv.str();
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    io::write_atomic(fs::path(cfg.out_dir) / "correlation.csv", csv.str());
    io::write_atomic(fs::path(cfg.out_dir) / "correlation.json",
                     json{{"excluded", cfg.exclude}, {"correlations", j}}.dump(2) + "\n");
  }
  return table.entries.empty() ? kExitUndefined : kExitOk;
}

struct LeaderboardArgs {
  std::vector<std::string> reports;
  std::optional<std::string> mos;
};

/// Mean of each column per method across scenes, then the per-column
/// leaderboard normalization.
inline int cmd_leaderboard(const RunConfig& cfg, const LeaderboardArgs& args, std::ostream& out, std::ostream& err) {
  const auto rules = leaderboard_rules_from_json(cfg.leaderboard_rules);
  std::map<std::string, std::map<std::string, std::vector<double>>> acc;  // method -> column -> values
  for (const auto& r : load_reports(args.reports, err)) {
    if (std::find(cfg.exclude.begin(), cfg.exclude.end(), r.method) != cfg.exclude.end()) continue;
    for (const auto& [k, v] : score_row(r).scores)
      if (std::isfinite(v)) acc[r.method][k].push_back(v);
  }
  if (args.mos) {
    const MosTable mos = ingest_mos(*args.mos);
    for (const auto& [key, v] : mos.entries)
      if (acc.contains(key.second)) acc[key.second]["mos"].push_back(v);
  }
  std::vector<std::string> methods, columns;
  for (const auto& [m, cols] : acc) {
    methods.push_back(m);
    for (const auto& [c, _] : cols)
      if (std::find(columns.begin(), columns.end(), c) == columns.end()) columns.push_back(c);
  }
  std::sort(columns.begin(), columns.end());
  std::map<std::string, std::vector<double>> normalized;
  for (const auto& c : columns) {
    std::vector<double> means;
    for (const auto& m : methods) {
      const auto it = acc[m].find(c);
      if (it == acc[m].end()) fail(ErrorKind::MalformedRow, "method '" + m + "' lacks column '" + c + "'");
      double s = 0.0;
      for (double v : it->second) s += v;
      means.push_back(s / static_cast<double>(it->second.size()));
    }
    normalized[c] = normalize_for_leaderboard(c, means, rules);
  }
  std::ostringstream csv;
  csv << "method";
  for (const auto& c : columns) csv << "," << c;
  csv << "\n";
  json j = json::array();
  for (std::size_t i = 0; i < methods.size(); ++i) {
    csv << methods[i];
    json row{{"method", methods[i]}};
    for (const auto& c : columns) {
      csv << "," << fmt(normalized[c][i], 6);
      row[c] = normalized[c][i];
    }
    csv << "\n";
    j.push_back(row);
  }
  out << csv.str();
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    io::write_atomic(fs::path(cfg.out_dir) / "leaderboard.csv", csv.str());
    io::write_atomic(fs::path(cfg.out_dir) / "leaderboard.json", j.dump(2) + "\n");
  }
  return kExitOk;
}

// --- entry point -----------------------------------------------------------------

/// Parses argv and dispatches. Returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"osim: object-level similarity between reference and rendered views"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> scenes;
  std::optional<std::string> model, layer, saliency, backend, out_dir, method, exclude;
  std::optional<double> conf, sigma;
  std::optional<int> parallel;
  bool no_timestamp = false;

  auto common = [&](CLI::App* s, bool model_opts) {
    s->add_option("--config", config_path, "JSON config file (comments allowed)");
    s->add_option("--out", out_dir, "output directory");
    s->add_option("--parallel", parallel, "worker threads")->check(CLI::PositiveNumber);
    if (!model_opts) return;
    s->add_option("--scene", scenes, "scene directory with ref/ and test/ (repeatable)");
    s->add_option("--model", model, "ONNX model file, or fixture directory with --backend fixture");
    s->add_option("--layer", layer, "feature layer name");
    s->add_option("--conf", conf, "detection confidence threshold");
    s->add_option("--saliency", saliency, "gbvs | uniform | file");
    s->add_option("--backend", backend, "onnx | fixture");
    s->add_option("--method", method, "name of the method that rendered test/");
    s->add_flag("--no-timestamp", no_timestamp, "omit generated_at from reports");
  };

  auto* ev = app.add_subcommand("evaluate", "score test views against reference views");
  common(ev, true);
  EvaluateArgs eargs;
  ev->add_flag("--overlay", eargs.overlay, "write low-quality object overlays");
  ev->add_option("--overlay-threshold", eargs.overlay_threshold, "class index threshold (default: scene OSIM)");

  auto* dg = app.add_subcommand("degrade", "cumulative per-object blur study");
  common(dg, true);
  DegradeArgs dargs;
  dg->add_option("--sigma", sigma, "blur sigma in pixels");
  dg->add_option("--order", dargs.order, "object order (area)");
  dg->add_option("--view", dargs.view, "only this reference view index");

  auto* co = app.add_subcommand("correlate", "correlate report columns with MOS");
  common(co, false);
  CorrelateArgs cargs;
  co->add_option("--mos", cargs.mos, "CSV with scene,model,mos")->required();
  co->add_option("--reports", cargs.reports, "report glob(s)")->required();
  co->add_option("--exclude", exclude, "comma-separated model names to drop");

  auto* lb = app.add_subcommand("leaderboard", "normalized per-method table");
  common(lb, false);
  LeaderboardArgs largs;
  lb->add_option("--reports", largs.reports, "report glob(s)")->required();
  lb->add_option("--mos", largs.mos, "optional MOS CSV");
  lb->add_option("--exclude", exclude, "comma-separated model names to drop");

  auto* sp = app.add_subcommand("split", "every-n-th train/test split of an image list");
  std::string list_dir;
  int stride = 8;
  sp->add_option("--images", list_dir, "directory of images")->required();
  sp->add_option("--n", stride, "test stride");

  auto* po = app.add_subcommand("poses", "enumerate a spherical pose grid");
  PoseGrid grid;
  bool no_dedupe = false;
  po->add_option("--tau", grid.tau, "step in degrees");
  po->add_option("--elev-min", grid.elevation_min);
  po->add_option("--elev-max", grid.elevation_max);
  po->add_flag("--no-dedupe-poles", no_dedupe);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) load_config_file(cfg, config_path);
    apply_env_overrides(cfg);
    if (!scenes.empty()) cfg.scenes = scenes;
    if (model) cfg.model.model_path = *model;
    if (layer) cfg.model.feature_layer = *layer;
    if (conf) cfg.model.confidence_threshold = *conf;
    if (saliency) cfg.saliency_mode = parse_saliency_mode(*saliency);
    if (backend) cfg.backend = *backend;
    if (out_dir) cfg.out_dir = *out_dir;
    if (method) cfg.method = *method;
    if (exclude) cfg.exclude = split_list(*exclude);
    if (parallel) cfg.parallelism = *parallel;
    if (sigma) cfg.blur_sigma = *sigma;
    if (no_timestamp) cfg.timestamp = false;

    if (ev->parsed()) return cmd_evaluate(cfg, eargs, out, err);
    if (dg->parsed()) return cmd_degrade(cfg, dargs, out, err);
    if (co->parsed()) return cmd_correlate(cfg, cargs, out, err);
    if (lb->parsed()) return cmd_leaderboard(cfg, largs, out, err);
    if (sp->parsed()) {
      std::vector<std::string> names;
      for (const auto& p : list_images(list_dir)) names.push_back(p.filename().string());
      const auto s = split_dataset(names, SplitSpec{stride});
      for (const auto& w : s.warnings) err << "warning: " << w << "\n";
      for (const auto& n : s.test) out << "test\t" << n << "\n";
      for (const auto& n : s.train) out << "train\t" << n << "\n";
      return kExitOk;
    }
    if (po->parsed()) {
      grid.dedupe_poles = !no_dedupe;
      const auto poses = pose_grid(grid);
      err << poses.size() << " poses\n";
      out << "elevation,azimuth\n";
      for (const auto& p : poses) out << p.elevation << "," << p.azimuth << "\n";
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace osim::cli
