#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tsdr/eval/matching.hpp"
#include "tsdr/eval/pipeline.hpp"
#include "tsdr/eval/ssim.hpp"
#include "tsdr/manifest.hpp"
#include "tsdr/plot.hpp"

namespace tsdr {

/// Accumulated outcomes for one (challenge kind, level) slice of a split:
/// raw detection counts (micro-averaged into ratios on demand) plus SSIM sums
/// of the detector input against the clean reference, full-frame and over the
/// sign region.
struct EvalCell {
  std::int64_t frames = 0;
  std::int64_t tp = 0, fp = 0, fn = 0;
  double ssim_full_sum = 0.0, ssim_sign_sum = 0.0;
  std::int64_t ssim_full_count = 0, ssim_sign_count = 0;

  double precision() const {
    return tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 1.0;
  }
  double recall() const {
    return tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 1.0;
  }
  double ssim_full() const {
    return ssim_full_count > 0 ? ssim_full_sum / static_cast<double>(ssim_full_count)
                               : std::nan("");
  }
  double ssim_sign() const {
    return ssim_sign_count > 0 ? ssim_sign_sum / static_cast<double>(ssim_sign_count)
                               : std::nan("");
  }

  void absorb(const EvalCell& o) {
    frames += o.frames;
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    ssim_full_sum += o.ssim_full_sum;
    ssim_sign_sum += o.ssim_sign_sum;
    ssim_full_count += o.ssim_full_count;
    ssim_sign_count += o.ssim_sign_count;
  }
};

struct EvalReport {
  std::string name;
  std::map<std::pair<ChallengeKind, int>, EvalCell> cells;
  nlohmann::json metadata = nlohmann::json::object();

  EvalCell& cell(ChallengeKind kind, int level) { return cells[{kind, level}]; }

  /// Micro-average over every cell.
  EvalCell totals() const {
    EvalCell t;
    for (const auto& [key, c] : cells) t.absorb(c);
    return t;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["name"] = name;
    j["metadata"] = metadata;
    auto arr = nlohmann::json::array();
    for (const auto& [key, c] : cells) {
      nlohmann::json e;
      e["kind"] = to_string(key.first);
      e["level"] = key.second;
      e["frames"] = c.frames;
      e["tp"] = c.tp;
      e["fp"] = c.fp;
      e["fn"] = c.fn;
      e["precision"] = c.precision();
      e["recall"] = c.recall();
      e["ssim_full_sum"] = c.ssim_full_sum;
      e["ssim_sign_sum"] = c.ssim_sign_sum;
      e["ssim_full_count"] = c.ssim_full_count;
      e["ssim_sign_count"] = c.ssim_sign_count;
      arr.push_back(e);
    }
    j["cells"] = arr;
    const EvalCell t = totals();
    j["aggregate"] = {{"frames", t.frames},       {"tp", t.tp},
                      {"fp", t.fp},               {"fn", t.fn},
                      {"precision", t.precision()}, {"recall", t.recall()}};
    return j;
  }

  static EvalReport from_json(const nlohmann::json& j) {
    EvalReport r;
    r.name = j.at("name").get<std::string>();
    r.metadata = j.value("metadata", nlohmann::json::object());
    for (const auto& e : j.at("cells")) {
      EvalCell c;
      c.frames = e.at("frames").get<std::int64_t>();
      c.tp = e.at("tp").get<std::int64_t>();
      c.fp = e.at("fp").get<std::int64_t>();
      c.fn = e.at("fn").get<std::int64_t>();
      c.ssim_full_sum = e.at("ssim_full_sum").get<double>();
      c.ssim_sign_sum = e.at("ssim_sign_sum").get<double>();
      c.ssim_full_count = e.at("ssim_full_count").get<std::int64_t>();
      c.ssim_sign_count = e.at("ssim_sign_count").get<std::int64_t>();
      r.cells[{challenge_kind_from_string(e.at("kind").get<std::string>()),
               e.at("level").get<int>()}] = c;
    }
    return r;
  }

  /// One row per cell, then an "all" aggregate row. Empty SSIM means no
  /// clean-reference frames contributed.
  std::string to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "name,kind,level,frames,tp,fp,fn,precision,recall,ssim_full,ssim_sign\n";
    auto row = [&](const std::string& kind, const std::string& level, const EvalCell& c) {
      out << name << ',' << kind << ',' << level << ',' << c.frames << ',' << c.tp << ',' << c.fp
          << ',' << c.fn << ',' << c.precision() << ',' << c.recall() << ',';
      if (c.ssim_full_count > 0) out << c.ssim_full();
      out << ',';
      if (c.ssim_sign_count > 0) out << c.ssim_sign();
      out << '\n';
    };
    for (const auto& [key, c] : cells) row(to_string(key.first), std::to_string(key.second), c);
    row("all", "all", totals());
    return out.str();
  }
};

namespace detail {

/// True when at least one region pixel can be the centre of a full 11x11
/// SSIM window, i.e. the region-restricted SSIM is defined.
inline bool region_reaches_ssim_centres(const std::vector<SignAnnotation>& signs, std::int64_t h,
                                        std::int64_t w) {
  for (const auto& s : signs)
    if (s.x + s.w > 5 && s.x <= w - 6 && s.y + s.h > 5 && s.y <= h - 6) return true;
  return false;
}

}  // namespace detail

using PipelineRunner = std::function<PipelineResult(const AnnotatedFrame&)>;

/// Drive `run` over every record, match detections against ground truth, and
/// accumulate counts per (kind, level). For challenged records carrying a
/// clean reference, also accumulate SSIM(detector input, clean) full-frame
/// and over the sign region — the enhanced-vs-clean quality signal.
inline EvalReport evaluate_records(const std::string& name,
                                   const std::vector<FrameRecord>& records,
                                   const PipelineRunner& run, bool with_ssim = true) {
  EvalReport report;
  report.name = name;
  for (const FrameRecord& rec : records) {
    const AnnotatedFrame af = rec.load();
    const PipelineResult res = run(af);
    const MatchResult m = match_detections(res.detections, af.signs);
    EvalCell& c = report.cell(af.challenge.kind, af.challenge.level);
    c.frames += 1;
    c.tp += m.tp;
    c.fp += m.fp;
    c.fn += m.fn;
    if (with_ssim && af.clean_ref.has_value()) {
      const std::int64_t h = af.frame.height(), w = af.frame.width();
      if (h >= 11 && w >= 11) {
        c.ssim_full_sum += ssim(res.detector_input, *af.clean_ref);
        c.ssim_full_count += 1;
        if (detail::region_reaches_ssim_centres(af.signs, h, w)) {
          const RegionSpec region(af.signs, h, w);
          c.ssim_sign_sum += ssim(res.detector_input, *af.clean_ref, &region);
          c.ssim_sign_count += 1;
        }
      }
    }
  }
  return report;
}

struct DegradationFiles {
  std::string csv_path;
  std::vector<std::string> plot_paths;
};

/// Fig.-style degradation summary across method variants: a CSV with one row
/// per (variant, kind, level ≥ 1) cell, plus per-kind precision-vs-level and
/// recall-vs-level PNG curves with one series per variant.
inline DegradationFiles degradation_report(const std::string& out_dir,
                                           const std::vector<EvalReport>& variants) {
  require(!variants.empty(), "degradation_report: no reports given");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  std::ostringstream csv;
  csv.precision(17);
  csv << "variant,kind,level,precision,recall\n";
  std::vector<ChallengeKind> kinds;
  for (const EvalReport& r : variants)
    for (const auto& [key, c] : r.cells)
      if (key.second >= 1 && std::find(kinds.begin(), kinds.end(), key.first) == kinds.end())
        kinds.push_back(key.first);

  for (const EvalReport& r : variants)
    for (const auto& [key, c] : r.cells)
      if (key.second >= 1)
        csv << r.name << ',' << to_string(key.first) << ',' << key.second << ',' << c.precision()
            << ',' << c.recall() << '\n';

  DegradationFiles out;
  out.csv_path = (fs::path(out_dir) / "degradation.csv").string();
  std::ofstream f(out.csv_path, std::ios::trunc);
  require(static_cast<bool>(f), "degradation_report: cannot write " + out.csv_path);
  f << csv.str();
  f.close();

  for (ChallengeKind kind : kinds) {
    for (const bool use_recall : {false, true}) {
      std::vector<PlotSeries> series;
      for (const EvalReport& r : variants) {
        PlotSeries s;
        s.label = r.name;
        for (const auto& [key, c] : r.cells)
          if (key.first == kind && key.second >= 1) {
            s.x.push_back(key.second);
            s.y.push_back(use_recall ? c.recall() : c.precision());
          }
        if (!s.x.empty()) series.push_back(std::move(s));
      }
      if (series.empty()) continue;
      const std::string metric = use_recall ? "recall" : "precision";
      const std::string path =
          (fs::path(out_dir) / ("degradation_" + metric + "_" + to_string(kind) + ".png"))
              .string();
      write_line_plot(path, metric + " vs level - " + to_string(kind), series);
      out.plot_paths.push_back(path);
    }
  }
  return out;
}

}  // namespace tsdr
