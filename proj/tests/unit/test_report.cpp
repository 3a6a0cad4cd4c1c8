#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "support/testutil.hpp"
#include "tsdr/eval/ablation.hpp"
#include "tsdr/eval/report.hpp"
#include "tsdr/plot.hpp"

using namespace tsdr;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "tsdr_report_tests" / name;
  fs::create_directories(dir);
  return dir;
}

std::uint64_t file_hash(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(static_cast<bool>(in));
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return fnv1a64(bytes.data(), bytes.size());
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s)
    if (c == '\n') ++n;
  return n;
}

/// Two in-memory records: a clean frame whose fake pipeline detects its one
/// sign perfectly, and a rain level-3 frame whose detection has the wrong
/// class.
std::vector<FrameRecord> fake_records() {
  std::vector<FrameRecord> records;
  records.push_back(make_memory_record([] {
    AnnotatedFrame af;
    af.frame = testutil::random_frame(24, 24, 1);
    af.frame.video_id = "clean0";
    af.signs = {{4, 5, 8, 7, 2}};
    return af;
  }));
  records.push_back(make_memory_record([] {
    AnnotatedFrame af;
    af.frame = testutil::random_frame(24, 24, 2);
    af.frame.video_id = "rain0";
    af.challenge = {ChallengeKind::kRain, 3};
    af.signs = {{6, 6, 9, 9, 4}};
    af.clean_ref = testutil::random_frame(24, 24, 3);
    af.clean_ref->video_id = "rain0";
    return af;
  }));
  return records;
}

PipelineResult fake_run(const AnnotatedFrame& af) {
  PipelineResult res;
  res.routed_kind = af.challenge.kind;
  res.detector_input = af.frame;
  res.mask = Tensor({af.frame.height(), af.frame.width()});
  for (const auto& s : af.signs) {
    Detection d;
    d.x = s.x;
    d.y = s.y;
    d.w = s.w;
    d.h = s.h;
    d.score = 0.9;
    d.class_id = af.challenge.kind == ChallengeKind::kNone ? s.class_id : s.class_id + 1;
    res.detections.push_back(d);
  }
  return res;
}

}  // namespace

TEST_CASE("evaluate_records fills cells, SSIM sums, and micro aggregates") {
  const auto records = fake_records();
  const EvalReport r = evaluate_records("demo", records, fake_run);

  REQUIRE(r.cells.size() == 2);
  const EvalCell& clean = r.cells.at({ChallengeKind::kNone, 0});
  CHECK(clean.frames == 1);
  CHECK(clean.tp == 1);
  CHECK(clean.fp == 0);
  CHECK(clean.fn == 0);
  CHECK(clean.precision() == 1.0);
  CHECK(clean.recall() == 1.0);
  CHECK(clean.ssim_full_count == 0);  // no clean reference on a clean record

  const EvalCell& rain = r.cells.at({ChallengeKind::kRain, 3});
  CHECK(rain.frames == 1);
  CHECK(rain.tp == 0);
  CHECK(rain.fp == 1);  // wrong class
  CHECK(rain.fn == 1);
  CHECK(rain.precision() == 0.0);
  CHECK(rain.recall() == 0.0);
  REQUIRE(rain.ssim_full_count == 1);
  REQUIRE(rain.ssim_sign_count == 1);

  // The SSIM sums must equal direct metric calls on the same frames.
  const AnnotatedFrame af = records[1].load();
  const RegionSpec region(af.signs, af.frame.height(), af.frame.width());
  CHECK(rain.ssim_full_sum == Catch::Approx(ssim(af.frame, *af.clean_ref)).epsilon(1e-12));
  CHECK(rain.ssim_sign_sum == Catch::Approx(ssim(af.frame, *af.clean_ref, &region)).epsilon(1e-12));

  const EvalCell t = r.totals();
  CHECK(t.frames == 2);
  CHECK(t.tp == 1);
  CHECK(t.fp == 1);
  CHECK(t.fn == 1);
  CHECK(t.precision() == 0.5);
  CHECK(t.recall() == 0.5);
}

TEST_CASE("empty cells report the 1.0 precision/recall convention") {
  EvalCell c;
  CHECK(c.precision() == 1.0);
  CHECK(c.recall() == 1.0);
}

TEST_CASE("report CSV has one row per cell plus an aggregate") {
  const EvalReport r = evaluate_records("demo", fake_records(), fake_run);
  const std::string csv = r.to_csv();
  CHECK(count_lines(csv) == 1 + 2 + 1);  // header, two cells, aggregate
  CHECK(csv.find("demo,none,0,1,1,0,0,") != std::string::npos);
  CHECK(csv.find("demo,rain,3,1,0,1,1,") != std::string::npos);
  CHECK(csv.find("demo,all,all,2,1,1,1,0.5,0.5") != std::string::npos);
}

TEST_CASE("report JSON round-trips") {
  EvalReport r = evaluate_records("demo", fake_records(), fake_run);
  r.metadata["seed"] = 7;
  const EvalReport back = EvalReport::from_json(r.to_json());
  CHECK(back.name == r.name);
  CHECK(back.metadata.at("seed") == 7);
  REQUIRE(back.cells.size() == r.cells.size());
  for (const auto& [key, c] : r.cells) {
    const EvalCell& b = back.cells.at(key);
    CHECK(b.frames == c.frames);
    CHECK(b.tp == c.tp);
    CHECK(b.fp == c.fp);
    CHECK(b.fn == c.fn);
    CHECK(b.ssim_full_sum == c.ssim_full_sum);
    CHECK(b.ssim_sign_sum == c.ssim_sign_sum);
    CHECK(b.ssim_full_count == c.ssim_full_count);
    CHECK(b.ssim_sign_count == c.ssim_sign_count);
  }
}

TEST_CASE("degradation report emits the full row grid and per-kind plots") {
  std::vector<EvalReport> variants(2);
  variants[0].name = "a";
  variants[1].name = "h";
  for (auto& r : variants)
    for (ChallengeKind kind : {ChallengeKind::kRain, ChallengeKind::kSnow})
      for (int level = 1; level <= 5; ++level) {
        EvalCell& c = r.cell(kind, level);
        c.frames = 10;
        c.tp = 10 - level;
        c.fp = level;
        c.fn = level;
      }

  const auto dir = tmp_dir("grid");
  const DegradationFiles files = degradation_report(dir.string(), variants);

  std::ifstream in(files.csv_path);
  REQUIRE(static_cast<bool>(in));
  std::string csv((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(count_lines(csv) == 1 + 2 * 2 * 5);  // header + variants x kinds x levels

  REQUIRE(files.plot_paths.size() == 4);  // 2 kinds x {precision, recall}
  for (const auto& p : files.plot_paths) {
    const Frame img = read_png(p);
    CHECK(img.width() == 480);
    CHECK(img.height() == 360);
  }
}

TEST_CASE("degradation report handles a single-level grid") {
  EvalReport r;
  r.name = "solo";
  EvalCell& c = r.cell(ChallengeKind::kHaze, 3);
  c.frames = 5;
  c.tp = 3;
  c.fn = 2;
  const auto dir = tmp_dir("solo");
  const DegradationFiles files = degradation_report(dir.string(), {r});
  std::ifstream in(files.csv_path);
  std::string csv((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(count_lines(csv) == 2);
  CHECK(files.plot_paths.size() == 2);
}

TEST_CASE("line plots are deterministic and sized as requested") {
  const auto dir = tmp_dir("plots");
  const std::vector<PlotSeries> series = {{"alpha", {1, 2, 3, 4, 5}, {0.9, 0.8, 0.75, 0.5, 0.4}},
                                          {"beta", {1, 2, 3, 4, 5}, {0.95, 0.92, 0.9, 0.88, 0.8}}};
  const auto p1 = dir / "curve1.png";
  const auto p2 = dir / "curve2.png";
  write_line_plot(p1.string(), "recall vs level", series);
  write_line_plot(p2.string(), "recall vs level", series);
  CHECK(file_hash(p1) == file_hash(p2));
  const Frame img = read_png(p1.string());
  CHECK(img.width() == 480);
  CHECK(img.height() == 360);

  SECTION("degenerate single-point series still renders") {
    const auto p3 = dir / "point.png";
    write_line_plot(p3.string(), "single", {{"p", {2.0}, {0.5}}});
    CHECK(fs::exists(p3));
  }

  SECTION("empty input is rejected") {
    CHECK_THROWS_AS(write_line_plot((dir / "none.png").string(), "empty", {}), Error);
    CHECK_THROWS_AS(write_line_plot((dir / "none.png").string(), "empty", {{"e", {}, {}}}), Error);
  }
}

TEST_CASE("ablation specs encode the variant ladder") {
  CHECK(all_ablation_variants().size() == 8);
  for (AblationVariant v : all_ablation_variants())
    CHECK(ablation_variant_from_string(to_string(v)) == v);
  CHECK_THROWS_AS(ablation_variant_from_string("z"), Error);
  CHECK_THROWS_AS(ablation_variant_from_string("ab"), Error);

  const AblationSpec a = ablation_spec(AblationVariant::kA);
  CHECK_FALSE(a.uses_enhancer);
  CHECK_FALSE(a.retrain_detector);

  const AblationSpec b = ablation_spec(AblationVariant::kB);
  CHECK(b.retrain_detector);
  CHECK_FALSE(b.uses_enhancer);

  const AblationSpec c = ablation_spec(AblationVariant::kC);
  CHECK(c.uses_enhancer);
  CHECK(c.region_mode == RegionMode::kFull);
  CHECK(ablation_loss_weights(c, ChallengeKind::kRain).lambda1 == 0.0);
  CHECK(ablation_loss_weights(c, ChallengeKind::kRain).lambda2 == 0.0);

  const AblationSpec d = ablation_spec(AblationVariant::kD);
  CHECK(d.region_mode == RegionMode::kSign);
  CHECK(ablation_loss_weights(d, ChallengeKind::kRain).lambda2 == 0.0);

  const AblationSpec e = ablation_spec(AblationVariant::kE);
  CHECK(e.region_mode == RegionMode::kFull);
  CHECK(ablation_loss_weights(e, ChallengeKind::kRain).lambda2 == 1.0);

  const AblationSpec f = ablation_spec(AblationVariant::kF);
  CHECK(f.region_mode == RegionMode::kSign);
  CHECK(ablation_loss_weights(f, ChallengeKind::kRain).lambda1 == 0.0);
  CHECK(ablation_loss_weights(f, ChallengeKind::kRain).lambda2 == 1.0);

  const AblationSpec g = ablation_spec(AblationVariant::kG);
  CHECK(ablation_loss_weights(g, ChallengeKind::kRain).lambda1 == 1.0);
  CHECK(ablation_loss_weights(g, ChallengeKind::kRain).lambda2 == 1.0);

  const AblationSpec h = ablation_spec(AblationVariant::kH);
  CHECK(h.tuned_coupling);
  CHECK(ablation_loss_weights(h, ChallengeKind::kRain).lambda1 == 5.0);
  CHECK(ablation_loss_weights(h, ChallengeKind::kRain).lambda2 == 5.0);
  CHECK(ablation_loss_weights(h, ChallengeKind::kSnow).lambda1 == 1.0);
  CHECK(ablation_loss_weights(h, ChallengeKind::kSnow).lambda2 == 10.0);
}

TEST_CASE("ablation evaluation routes by ground truth") {
  // A detector-only spec must bypass enhancement even on challenged frames;
  // with fake models we only exercise the spec-to-forced-kind mapping here,
  // using the fake runner contract via evaluate_records equivalence.
  const auto records = fake_records();
  const AblationSpec spec_a = ablation_spec(AblationVariant::kA);
  CHECK_FALSE(spec_a.uses_enhancer);
  const AblationSpec spec_h = ablation_spec(AblationVariant::kH);
  CHECK(spec_h.uses_enhancer);
}
