#include <catch2/catch_amalgamated.hpp>

#include <map>

#include "support/testutil.hpp"
#include "tsdr/eval/pipeline.hpp"

using namespace tsdr;

namespace {

struct TinyModels {
  ChallengeClassifier classifier;
  SignDetector detector;
  SignClassifier sign_classifier;
  EnhanceNet rain, snow, haze, dirty, blur;

  TinyModels()
      : classifier(make_classifier_cfg()),
        detector(make_detector_cfg()),
        sign_classifier(make_sign_cfg()),
        rain(make_enh_cfg(1)),
        snow(make_enh_cfg(2)),
        haze(make_enh_cfg(3)),
        dirty(make_enh_cfg(4)),
        blur(make_enh_cfg(5)) {}

  static ClassifierConfig make_classifier_cfg() {
    ClassifierConfig c;
    c.input_size = 32;
    c.width_scale = 0.1;
    c.seed = 11;
    return c;
  }
  static DetectorConfig make_detector_cfg() {
    DetectorConfig c;
    c.base_channels = 4;
    c.seed = 12;
    return c;
  }
  static SignClassifierConfig make_sign_cfg() {
    SignClassifierConfig c;
    c.num_classes = 14;
    c.input_size = 16;
    c.seed = 13;
    return c;
  }
  static EnhancerConfig make_enh_cfg(std::uint64_t seed) {
    EnhancerConfig c;
    c.base_channels = 4;
    c.num_residual_blocks = 1;
    c.seed = seed;
    return c;
  }

  ModelBundle bundle() {
    ModelBundle b;
    b.classifier = &classifier;
    b.detector = &detector;
    b.sign_classifier = &sign_classifier;
    b.enhancers = {{ChallengeKind::kRain, &rain},
                   {ChallengeKind::kSnow, &snow},
                   {ChallengeKind::kHaze, &haze},
                   {ChallengeKind::kDirtyLens, &dirty},
                   {ChallengeKind::kLensBlur, &blur}};
    return b;
  }
};

bool same_detections(const std::vector<Detection>& a, const std::vector<Detection>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].x != b[i].x || a[i].y != b[i].y || a[i].w != b[i].w || a[i].h != b[i].h ||
        a[i].score != b[i].score || a[i].class_id != b[i].class_id)
      return false;
  return true;
}

}  // namespace

TEST_CASE("forcing the bypass reproduces the detector-only path bitwise") {
  TinyModels m;
  ModelBundle bundle = m.bundle();
  const Frame f = testutil::random_frame(32, 32, 100);

  const PipelineResult res = run_pipeline(f, bundle, ChallengeKind::kNone);
  CHECK(res.routed_kind == ChallengeKind::kNone);
  CHECK(res.detector_input.pixels.byte_hash(1) == f.pixels.byte_hash(1));

  // Hand-rolled detector-only path.
  const Tensor mask = m.detector.segment(f);
  auto dets = mask_to_boxes(mask, m.detector.config().threshold,
                            m.detector.config().min_area_for(f.height(), f.width()));
  for (Detection& d : dets) d.class_id = m.sign_classifier.classify_crop(f, d);
  CHECK(res.mask.byte_hash(1) == mask.byte_hash(1));
  CHECK(same_detections(res.detections, dets));
}

TEST_CASE("routing to an enhancer feeds the detector the enhanced frame") {
  TinyModels m;
  ModelBundle bundle = m.bundle();
  const Frame f = testutil::random_frame(32, 32, 101);

  const PipelineResult res = run_pipeline(f, bundle, ChallengeKind::kRain);
  CHECK(res.routed_kind == ChallengeKind::kRain);
  const Frame enhanced = m.rain.enhance(f);
  CHECK(res.detector_input.pixels.byte_hash(2) == enhanced.pixels.byte_hash(2));
  CHECK(res.mask.byte_hash(2) == m.detector.segment(enhanced).byte_hash(2));
}

TEST_CASE("a missing enhancer for the routed kind is an error") {
  TinyModels m;
  ModelBundle bundle = m.bundle();
  bundle.enhancers.erase(ChallengeKind::kSnow);
  const Frame f = testutil::random_frame(32, 32, 102);
  CHECK_THROWS_AS(run_pipeline(f, bundle, ChallengeKind::kSnow), Error);
}

TEST_CASE("without a forced route the classifier decides") {
  TinyModels m;
  ModelBundle bundle = m.bundle();
  const Frame f = testutil::random_frame(32, 32, 103);

  const ChallengePrediction pred = m.classifier.classify(f);
  const PipelineResult res = run_pipeline(f, bundle);
  CHECK(res.routed_kind == pred.kind);
  double sum = 0.0;
  for (double p : res.challenge.probs) {
    CHECK(p >= 0.0);
    sum += p;
  }
  CHECK(sum == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("pipeline rejects a bundle without detector or classifier") {
  TinyModels m;
  const Frame f = testutil::random_frame(32, 32, 104);

  ModelBundle no_detector = m.bundle();
  no_detector.detector = nullptr;
  CHECK_THROWS_AS(run_pipeline(f, no_detector, ChallengeKind::kNone), Error);

  ModelBundle no_classifier = m.bundle();
  no_classifier.classifier = nullptr;
  CHECK_THROWS_AS(run_pipeline(f, no_classifier), Error);
  CHECK_NOTHROW(run_pipeline(f, no_classifier, ChallengeKind::kNone));
}

TEST_CASE("pipeline inference is deterministic") {
  TinyModels m;
  ModelBundle bundle = m.bundle();
  const Frame f = testutil::random_frame(32, 32, 105);
  const PipelineResult r1 = run_pipeline(f, bundle, ChallengeKind::kHaze);
  const PipelineResult r2 = run_pipeline(f, bundle, ChallengeKind::kHaze);
  CHECK(r1.mask.byte_hash(3) == r2.mask.byte_hash(3));
  CHECK(same_detections(r1.detections, r2.detections));
}
