#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

#include "support/testutil.hpp"
#include "tsdr/manifest.hpp"
#include "tsdr/synth/challenge.hpp"
#include "tsdr/synth/scene.hpp"
#include "tsdr/train/classifier.hpp"
#include "tsdr/train/detector.hpp"
#include "tsdr/train/enhancer.hpp"
#include "tsdr/train/sign_classifier.hpp"

using namespace tsdr;
using Catch::Matchers::ContainsSubstring;
using testutil::random_frame;

namespace {

SceneConfig small_scene_config() {
  SceneConfig sc;
  sc.height = 32;
  sc.width = 32;
  sc.num_sign_classes = 3;
  sc.min_signs = 1;
  sc.max_signs = 2;
  return sc;
}

FrameRecord clean_record(std::uint64_t seed, const std::string& video = "clean") {
  return make_memory_record([seed, video] {
    SceneConfig sc = small_scene_config();
    sc.video_id = video;
    AnnotatedFrame af = synth_scene(seed, sc);
    af.frame.frame_idx = static_cast<std::int64_t>(seed);
    return af;
  });
}

FrameRecord challenged_record(std::uint64_t seed, ChallengeKind kind, int level,
                              const std::string& video = "chal") {
  return make_memory_record([seed, kind, level, video] {
    SceneConfig sc = small_scene_config();
    sc.video_id = video;
    AnnotatedFrame clean = synth_scene(seed, sc);
    clean.frame.frame_idx = static_cast<std::int64_t>(seed);
    return challenge_scene(clean, {kind, level}, seed * 131 + static_cast<std::uint64_t>(level));
  });
}

GroupSample sample_with_sign(std::uint64_t seed) {
  GroupSample s;
  s.challenged = random_frame(16, 16, seed);
  s.clean = random_frame(16, 16, seed + 1000);
  s.signs = {{3, 2, 9, 10, 1}};
  return s;
}

double max_rel_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.same_shape(b));
  double worst = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-12});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

SignDetector frozen_detector(std::int64_t base_channels, std::uint64_t seed) {
  DetectorConfig dc;
  dc.base_channels = base_channels;
  dc.seed = seed;
  SignDetector det(dc);
  det.freeze();
  return det;
}

}  // namespace

TEST_CASE("plateau scheduler halves the rate after stalled epochs", "[training]") {
  nn::Param p(Tensor::zeros({1}), "p");
  std::vector<nn::Param*> params{&p};
  nn::Adam opt(params, 1e-3);
  nn::PlateauScheduler sched(nn::PlateauScheduler::Mode::kMin, 0.5, 2);

  CHECK_FALSE(sched.step(1.0, opt));  // first metric is the running best
  CHECK_FALSE(sched.step(0.9, opt));  // improvement
  CHECK_FALSE(sched.step(0.95, opt));  // stall 1
  CHECK_FALSE(sched.step(0.95, opt));  // stall 2 (= patience)
  CHECK(sched.step(0.95, opt));        // stall 3 -> reduction
  CHECK(opt.lr() == Catch::Approx(5e-4));
  CHECK(sched.best() == Catch::Approx(0.9));

  SECTION("rate never drops below the floor") {
    nn::Adam opt2(params, 2e-6);
    nn::PlateauScheduler tight(nn::PlateauScheduler::Mode::kMin, 0.5, 1);
    CHECK_FALSE(tight.step(1.0, opt2));
    CHECK_FALSE(tight.step(1.0, opt2));
    CHECK(tight.step(1.0, opt2));  // 2e-6 -> 1e-6 (the floor)
    CHECK(opt2.lr() == Catch::Approx(1e-6));
    CHECK_FALSE(tight.step(1.0, opt2));
    CHECK_FALSE(tight.step(1.0, opt2));  // already at the floor: no reduction reported
    CHECK(opt2.lr() == Catch::Approx(1e-6));
  }
}

TEST_CASE("challenge classifier training demands every kind", "[training]") {
  std::vector<FrameRecord> train, val;
  train.push_back(clean_record(1));
  train.push_back(challenged_record(2, ChallengeKind::kRain, 3));
  train.push_back(challenged_record(3, ChallengeKind::kSnow, 3));
  val.push_back(clean_record(4));

  ClassifierConfig cc;
  cc.input_size = 16;
  cc.width_scale = 0.02;
  ChallengeClassifier model(cc);
  ClassifierTrainConfig cfg;
  cfg.epochs = 1;
  CHECK_THROWS_WITH(train_challenge_classifier(model, train, val, cfg),
                    ContainsSubstring("no training examples of kind") &&
                        ContainsSubstring("haze"));
  CHECK_THROWS_AS(train_challenge_classifier(model, {}, val, cfg), Error);
}

TEST_CASE("challenge classifier training runs deterministically", "[training]") {
  std::vector<FrameRecord> train, val;
  const std::vector<ChallengeKind> kinds = {ChallengeKind::kRain, ChallengeKind::kSnow,
                                            ChallengeKind::kHaze, ChallengeKind::kDirtyLens,
                                            ChallengeKind::kLensBlur};
  std::uint64_t seed = 10;
  for (int copy = 0; copy < 2; ++copy) {
    train.push_back(clean_record(seed++));
    for (const auto k : kinds) train.push_back(challenged_record(seed++, k, 3));
  }
  val.push_back(clean_record(seed++));
  for (const auto k : kinds) val.push_back(challenged_record(seed++, k, 3));

  ClassifierConfig cc;
  cc.input_size = 16;
  cc.width_scale = 0.02;
  cc.seed = 7;
  ClassifierTrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.rng_seed = 11;

  ChallengeClassifier a(cc);
  const ClassifierHistory ha = train_challenge_classifier(a, train, val, cfg);
  REQUIRE(ha.epochs.size() == 2);
  CHECK(ha.epochs[0].epoch == 1);
  CHECK(ha.epochs[0].lr == Catch::Approx(1e-3));
  CHECK(std::isfinite(ha.epochs[1].train_loss));
  CHECK(ha.epochs[0].train_accuracy >= 0.0);
  CHECK(ha.epochs[0].train_accuracy <= 1.0);
  CHECK(ha.best_val_accuracy >= 0.0);
  CHECK(ha.best_val_accuracy <= 1.0);
  const double best_seen = std::max(ha.epochs[0].val_accuracy, ha.epochs[1].val_accuracy);
  CHECK(ha.best_val_accuracy == Catch::Approx(best_seen));
  CHECK_THAT(ha.to_csv(),
             ContainsSubstring("epoch,lr,train_loss,train_accuracy,val_accuracy,lr_reduced"));

  ChallengeClassifier b(cc);
  const ClassifierHistory hb = train_challenge_classifier(b, train, val, cfg);
  CHECK(ha.to_csv() == hb.to_csv());
  CHECK(nn::params_checksum(a.params()) == nn::params_checksum(b.params()));

  const auto cm = confusion_matrix(a, val);
  std::int64_t total = 0;
  for (const auto& row : cm)
    for (const auto v : row) total += v;
  CHECK(total == static_cast<std::int64_t>(val.size()));
}

TEST_CASE("zero-epoch classifier training is an identity", "[training]") {
  std::vector<FrameRecord> train, val;
  train.push_back(clean_record(50));
  for (int k = 1; k < kNumChallengeKinds; ++k)
    train.push_back(challenged_record(50 + static_cast<std::uint64_t>(k),
                                      static_cast<ChallengeKind>(k), 2));
  val.push_back(clean_record(60));

  ClassifierConfig cc;
  cc.input_size = 16;
  cc.width_scale = 0.02;
  ChallengeClassifier model(cc);
  const std::uint64_t before = nn::params_checksum(model.params());
  ClassifierTrainConfig cfg;
  cfg.epochs = 0;
  const ClassifierHistory h = train_challenge_classifier(model, train, val, cfg);
  CHECK(h.epochs.empty());
  CHECK(nn::params_checksum(model.params()) == before);
}

TEST_CASE("detector training rejects challenged records", "[training]") {
  std::vector<FrameRecord> train{clean_record(1), challenged_record(2, ChallengeKind::kRain, 1)};
  std::vector<FrameRecord> val{clean_record(3)};
  DetectorConfig dc;
  dc.base_channels = 2;
  SignDetector model(dc);
  CHECK_THROWS_WITH(train_detector(model, train, val, {}),
                    ContainsSubstring("challenged record") && ContainsSubstring("chal#2"));
}

TEST_CASE("detector training reduces the overlap loss and freezes", "[training]") {
  std::vector<FrameRecord> train, val;
  for (std::uint64_t s = 0; s < 12; ++s) train.push_back(clean_record(100 + s));
  for (std::uint64_t s = 0; s < 3; ++s) val.push_back(clean_record(200 + s));

  DetectorConfig dc;
  dc.base_channels = 2;
  dc.seed = 3;
  SignDetector model(dc);
  DetectorTrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 4;
  cfg.rng_seed = 5;

  const DetectorHistory h = train_detector(model, train, val, cfg);
  REQUIRE(h.epochs.size() == 4);
  CHECK(h.epochs.front().lr == Catch::Approx(1e-3));
  CHECK(h.epochs.back().train_loss < h.epochs.front().train_loss);
  CHECK(h.best_val_loss <= h.epochs.front().val_loss);
  for (const auto& e : h.epochs) {
    CHECK(std::isfinite(e.train_loss));
    CHECK(std::isfinite(e.val_loss));
  }
  CHECK(model.frozen());
  CHECK_NOTHROW(model.assert_frozen());
  CHECK_THAT(h.to_csv(), ContainsSubstring("epoch,lr,train_loss,val_loss,lr_reduced"));
}

TEST_CASE("sign classifier training demands every class", "[training]") {
  // Class 2 never appears: scenes draw only classes 0 and 1.
  auto record_with_class = [](std::uint64_t seed, int cls) {
    return make_memory_record([seed, cls] {
      SceneConfig sc = small_scene_config();
      sc.num_sign_classes = 1;  // placeholder; boxes are overwritten below
      AnnotatedFrame af = synth_scene(seed, sc);
      for (auto& s : af.signs) s.class_id = cls;
      return af;
    });
  };
  std::vector<FrameRecord> train{record_with_class(1, 0), record_with_class(2, 1)};
  std::vector<FrameRecord> val{record_with_class(3, 0)};

  SignClassifierConfig sc;
  sc.num_classes = 3;
  sc.input_size = 16;
  SignClassifier model(sc);
  CHECK_THROWS_WITH(train_sign_classifier(model, train, val, {}),
                    ContainsSubstring("class 2 has no training examples"));

  SECTION("challenged records are rejected") {
    std::vector<FrameRecord> bad{challenged_record(4, ChallengeKind::kSnow, 2)};
    CHECK_THROWS_WITH(train_sign_classifier(model, bad, val, {}),
                      ContainsSubstring("challenged record"));
  }
}

TEST_CASE("sign classifier training runs deterministically", "[training]") {
  std::vector<FrameRecord> train, val;
  for (std::uint64_t s = 0; s < 8; ++s) train.push_back(clean_record(300 + s));
  for (std::uint64_t s = 0; s < 3; ++s) val.push_back(clean_record(400 + s));
  // The tiny scene pool may miss a class by chance; patch labels to cover all.
  train.push_back(make_memory_record([] {
    AnnotatedFrame af = synth_scene(777, small_scene_config());
    for (std::size_t i = 0; i < af.signs.size(); ++i)
      af.signs[i].class_id = static_cast<int>(i) % 3;
    return af;
  }));
  for (int cls = 0; cls < 3; ++cls)
    train.push_back(make_memory_record([cls] {
      AnnotatedFrame af = synth_scene(800 + static_cast<std::uint64_t>(cls),
                                      small_scene_config());
      for (auto& s : af.signs) s.class_id = cls;
      return af;
    }));

  SignClassifierConfig sc;
  sc.num_classes = 3;
  sc.input_size = 16;
  sc.seed = 2;
  SignTrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.rng_seed = 9;

  SignClassifier a(sc);
  const ClassifierHistory ha = train_sign_classifier(a, train, val, cfg);
  REQUIRE(ha.epochs.size() == 2);
  CHECK(std::isfinite(ha.epochs[0].train_loss));
  CHECK(ha.best_val_accuracy >= 0.0);

  SignClassifier b(sc);
  const ClassifierHistory hb = train_sign_classifier(b, train, val, cfg);
  CHECK(ha.to_csv() == hb.to_csv());
  CHECK(nn::params_checksum(a.params()) == nn::params_checksum(b.params()));
}

TEST_CASE("composite example loss accumulates exactly like separate passes", "[training]") {
  EnhancerConfig ec;
  ec.base_channels = 2;
  ec.num_residual_blocks = 1;
  ec.seed = 5;
  EnhanceNet net(ec);
  SignDetector det = frozen_detector(2, 6);
  AvgPoolFeatures phi(2);
  LossWeights w;
  w.lambda1 = 0.7;
  w.lambda2 = 0.9;

  std::vector<GroupSample> samples;
  for (std::uint64_t i = 0; i < 5; ++i) samples.push_back(sample_with_sign(20 + i));

  const auto params = net.params();
  nn::Adam opt(params, 1e-3);

  opt.zero_grad();
  std::vector<double> group_losses;
  for (const auto& s : samples)
    group_losses.push_back(
        enhancer_example_loss(net, det, phi, s, w, RegionMode::kSign, true).l_total);
  std::vector<Tensor> accumulated;
  for (const auto* p : params) accumulated.push_back(p->grad);

  std::vector<Tensor> summed;
  for (const auto* p : params) summed.push_back(Tensor::zeros(p->value.shape()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    opt.zero_grad();
    const LossBundle lb =
        enhancer_example_loss(net, det, phi, samples[i], w, RegionMode::kSign, true);
    CHECK(lb.l_total == group_losses[i]);  // weights untouched between passes
    for (std::size_t k = 0; k < params.size(); ++k) summed[k] += params[k]->grad;
  }

  for (std::size_t k = 0; k < params.size(); ++k)
    CHECK(max_rel_diff(accumulated[k], summed[k]) < 1e-6);
}

TEST_CASE("composite example loss gradient matches finite differences", "[training]") {
  EnhancerConfig ec;
  ec.base_channels = 1;
  ec.num_residual_blocks = 1;
  ec.seed = 12;
  EnhanceNet net(ec);
  SignDetector det = frozen_detector(1, 13);
  AvgPoolFeatures phi(2);
  LossWeights w;
  w.lambda1 = 0.7;
  w.lambda2 = 0.9;
  w.alpha = 0.4;
  w.beta = 0.6;
  const GroupSample sample = sample_with_sign(31);

  const auto params = net.params();
  nn::Adam opt(params, 1e-3);
  opt.zero_grad();
  (void)enhancer_example_loss(net, det, phi, sample, w, RegionMode::kSign, true);

  auto loss_at = [&] {
    return enhancer_example_loss(net, det, phi, sample, w, RegionMode::kSign, false).l_total;
  };
  const double h = 1e-6;
  int checked = 0;
  for (std::size_t k = 0; k < params.size(); k += std::max<std::size_t>(1, params.size() / 9)) {
    nn::Param* p = params[k];
    const std::int64_t idx = (static_cast<std::int64_t>(k) * 37) % p->value.numel();
    const double orig = p->value[idx];
    p->value[idx] = orig + h;
    const double up = loss_at();
    p->value[idx] = orig - h;
    const double down = loss_at();
    p->value[idx] = orig;
    const double fd = (up - down) / (2.0 * h);
    const double analytic = p->grad[idx];
    if (std::abs(fd) < 1e-8 && std::abs(analytic) < 1e-8) continue;
    CHECK_THAT(analytic, Catch::Matchers::WithinRel(fd, 1e-3) ||
                             Catch::Matchers::WithinAbs(fd, 1e-8));
    ++checked;
  }
  CHECK(checked >= 5);
}

TEST_CASE("example loss honours coupling factors and modes", "[training]") {
  EnhancerConfig ec;
  ec.base_channels = 1;
  ec.num_residual_blocks = 0;
  ec.seed = 3;
  EnhanceNet net(ec);
  SignDetector det = frozen_detector(1, 4);
  IdentityFeatures phi;
  const GroupSample sample = sample_with_sign(40);

  LossWeights coupled;
  coupled.lambda1 = 2.0;
  coupled.lambda2 = 3.0;
  const LossBundle a = enhancer_example_loss(net, det, phi, sample, coupled, RegionMode::kSign);
  CHECK(a.l_total ==
        Catch::Approx(a.l_enhance_sign + 2.0 * a.l_content_sign + 3.0 * a.l_localizer));
  CHECK(a.l_enhance_sign > 0.0);
  CHECK(a.l_localizer > 0.0);

  LossWeights plain;
  plain.lambda1 = 0.0;
  plain.lambda2 = 0.0;
  const LossBundle b = enhancer_example_loss(net, det, phi, sample, plain, RegionMode::kSign);
  CHECK(b.l_total == Catch::Approx(b.l_enhance_sign));
  CHECK(b.l_content_sign > 0.0);  // reported even when the factor is zero
  CHECK(b.l_localizer > 0.0);
  CHECK(b.l_enhance_sign == Catch::Approx(a.l_enhance_sign));

  const LossBundle c = enhancer_example_loss(net, det, phi, sample, coupled, RegionMode::kFull);
  CHECK(c.l_enhance_sign != Catch::Approx(a.l_enhance_sign));

  SECTION("unfrozen detector is rejected") {
    DetectorConfig dc;
    dc.base_channels = 1;
    SignDetector loose(dc);
    CHECK_THROWS_WITH(enhancer_example_loss(net, loose, phi, sample, coupled, RegionMode::kSign),
                      ContainsSubstring("freeze"));
  }
}

TEST_CASE("enhancer training checks its preconditions", "[training]") {
  EnhancerConfig ec;
  ec.base_channels = 2;
  ec.num_residual_blocks = 0;
  EnhanceNet net(ec);
  AvgPoolFeatures phi(2);
  EnhancerTrainConfig cfg;
  cfg.kind = ChallengeKind::kRain;
  cfg.epochs = 1;
  cfg.patch_size = 16;

  std::vector<FrameRecord> train, val;
  for (int level = 1; level <= 5; ++level)
    train.push_back(challenged_record(500 + static_cast<std::uint64_t>(level),
                                      ChallengeKind::kRain, level));
  val.push_back(challenged_record(600, ChallengeKind::kRain, 3));

  SECTION("detector must be frozen") {
    DetectorConfig dc;
    dc.base_channels = 2;
    SignDetector loose(dc);
    CHECK_THROWS_WITH(train_enhancer(net, loose, phi, train, val, cfg, {}),
                      ContainsSubstring("frozen"));
  }

  SignDetector det = frozen_detector(2, 21);

  SECTION("every severity level must be represented") {
    std::vector<FrameRecord> missing;
    for (const auto& r : train)
      if (r.challenge.level != 4) missing.push_back(r);
    CHECK_THROWS_WITH(train_enhancer(net, det, phi, missing, val, cfg, {}),
                      ContainsSubstring("no level-4") && ContainsSubstring("rain"));
  }

  SECTION("matching records need a clean reference") {
    std::vector<FrameRecord> bad = train;
    bad.push_back(make_memory_record([] {
      AnnotatedFrame af = synth_scene(700, small_scene_config());
      af.frame = apply_challenge(af.frame, {ChallengeKind::kRain, 2}, 701);
      af.challenge = {ChallengeKind::kRain, 2};
      return af;  // no clean_ref on purpose
    }));
    CHECK_THROWS_WITH(train_enhancer(net, det, phi, bad, val, cfg, {}),
                      ContainsSubstring("clean reference"));
  }

  SECTION("validation must contain the kind") {
    std::vector<FrameRecord> other{challenged_record(800, ChallengeKind::kSnow, 2)};
    CHECK_THROWS_WITH(train_enhancer(net, det, phi, train, other, cfg, {}),
                      ContainsSubstring("validation split"));
  }

  SECTION("config invariants") {
    EnhancerTrainConfig bad = cfg;
    bad.accumulation_group = 4;
    CHECK_THROWS_AS(train_enhancer(net, det, phi, train, val, bad, {}), Error);
    bad = cfg;
    bad.kind = ChallengeKind::kNone;
    CHECK_THROWS_AS(train_enhancer(net, det, phi, train, val, bad, {}), Error);
  }
}

TEST_CASE("zero-epoch enhancer training leaves the network untouched", "[training]") {
  EnhancerConfig ec;
  ec.base_channels = 2;
  ec.num_residual_blocks = 0;
  ec.seed = 8;
  EnhanceNet net(ec);
  SignDetector det = frozen_detector(2, 9);
  AvgPoolFeatures phi(2);

  std::vector<FrameRecord> train, val;
  for (int level = 1; level <= 5; ++level)
    train.push_back(challenged_record(900 + static_cast<std::uint64_t>(level),
                                      ChallengeKind::kHaze, level));
  val.push_back(challenged_record(950, ChallengeKind::kHaze, 1));

  EnhancerTrainConfig cfg;
  cfg.kind = ChallengeKind::kHaze;
  cfg.epochs = 0;
  cfg.patch_size = 16;

  const std::uint64_t before = nn::params_checksum(net.params());
  const EnhancerHistory h = train_enhancer(net, det, phi, train, val, cfg, {});
  CHECK(h.epochs.empty());
  CHECK(nn::params_checksum(net.params()) == before);
}

TEST_CASE("enhancer training steps, logs, and keeps the detector frozen", "[training]") {
  EnhancerConfig ec;
  ec.base_channels = 2;
  ec.num_residual_blocks = 0;
  ec.seed = 14;
  SignDetector det = frozen_detector(2, 15);
  const std::uint64_t det_before = det.weights_checksum();
  AvgPoolFeatures phi(2);

  std::vector<FrameRecord> train, val;
  std::uint64_t seed = 1000;
  for (int level = 1; level <= 5; ++level)
    for (int copy = 0; copy < 2; ++copy)
      train.push_back(challenged_record(seed++, ChallengeKind::kRain, level));
  val.push_back(challenged_record(seed++, ChallengeKind::kRain, 2));
  val.push_back(challenged_record(seed++, ChallengeKind::kRain, 5));
  // Records of other kinds and challenge-free records are ignored, not errors.
  train.push_back(challenged_record(seed++, ChallengeKind::kSnow, 1));
  train.push_back(clean_record(seed++));

  EnhancerTrainConfig cfg;
  cfg.kind = ChallengeKind::kRain;
  cfg.epochs = 2;
  cfg.patch_size = 16;
  cfg.rng_seed = 17;
  LossWeights w;
  w.lambda1 = 1.0;
  w.lambda2 = 1.0;

  EnhanceNet a(ec);
  const std::uint64_t init_checksum = nn::params_checksum(a.params());
  const EnhancerHistory ha = train_enhancer(a, det, phi, train, val, cfg, w);
  REQUIRE(ha.epochs.size() == 2);
  CHECK(ha.epochs[0].epoch == 1);
  CHECK(ha.epochs[0].lr == Catch::Approx(1e-3));
  for (const auto& e : ha.epochs) {
    CHECK(std::isfinite(e.l_total));
    CHECK(e.l_enhance > 0.0);
    CHECK(e.l_content > 0.0);
    CHECK(e.l_localizer > 0.0);
    CHECK(e.val_total > 0.0);
  }
  CHECK(ha.best_val_total ==
        Catch::Approx(std::min(ha.epochs[0].val_total, ha.epochs[1].val_total)));
  CHECK(nn::params_checksum(a.params()) != init_checksum);
  CHECK(det.weights_checksum() == det_before);
  CHECK_NOTHROW(det.assert_frozen());
  CHECK_THAT(ha.to_csv(),
             ContainsSubstring("epoch,lr,l_enhance,l_content,l_localizer,l_total,val_total"));

  SECTION("identical seeds reproduce the run") {
    EnhanceNet b(ec);
    const EnhancerHistory hb = train_enhancer(b, det, phi, train, val, cfg, w);
    CHECK(ha.to_csv() == hb.to_csv());
    CHECK(nn::params_checksum(a.params()) == nn::params_checksum(b.params()));
  }
}
