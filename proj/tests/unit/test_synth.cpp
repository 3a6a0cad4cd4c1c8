#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <set>

#include "tsdr/eval/ssim.hpp"
#include "tsdr/synth/challenge.hpp"
#include "tsdr/synth/scene.hpp"

using namespace tsdr;

TEST_CASE("scene synthesis is deterministic and annotated in bounds", "[synth]") {
  SceneConfig cfg;
  cfg.height = 48;
  cfg.width = 64;
  cfg.num_sign_classes = 14;
  cfg.min_signs = 1;
  cfg.max_signs = 3;

  const AnnotatedFrame a = synth_scene(123, cfg);
  const AnnotatedFrame b = synth_scene(123, cfg);
  CHECK(a.frame.pixels.byte_hash() == b.frame.pixels.byte_hash());
  CHECK(a.signs == b.signs);
  CHECK(a.challenge.kind == ChallengeKind::kNone);
  CHECK_FALSE(a.clean_ref.has_value());
  CHECK_NOTHROW(a.frame.validate());

  const AnnotatedFrame c = synth_scene(124, cfg);
  CHECK(a.frame.pixels.byte_hash() != c.frame.pixels.byte_hash());

  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const AnnotatedFrame s = synth_scene(seed, cfg);
    CHECK(s.signs.size() >= 1);
    CHECK(s.signs.size() <= 3);
    for (const auto& sb : s.signs) {
      CHECK(sb.x >= 0);
      CHECK(sb.y >= 0);
      CHECK(sb.x + sb.w <= 64);
      CHECK(sb.y + sb.h <= 48);
      CHECK(sb.class_id >= 0);
      CHECK(sb.class_id < 14);
    }
  }

  SECTION("sign classes eventually cover the label space") {
    std::set<int> seen;
    for (std::uint64_t seed = 0; seed < 300 && seen.size() < 14; ++seed)
      for (const auto& sb : synth_scene(seed, cfg).signs) seen.insert(sb.class_id);
    CHECK(seen.size() == 14);
  }

  SECTION("zero signs is expressible") {
    SceneConfig none = cfg;
    none.min_signs = 0;
    none.max_signs = 0;
    CHECK(synth_scene(7, none).signs.empty());
  }

  SECTION("config validation") {
    SceneConfig bad = cfg;
    bad.height = 18;
    CHECK_THROWS_AS(synth_scene(1, bad), Error);
    bad = cfg;
    bad.min_signs = 3;
    bad.max_signs = 1;
    CHECK_THROWS_AS(synth_scene(1, bad), Error);
  }
}

TEST_CASE("challenges are deterministic and bounded", "[synth]") {
  SceneConfig sc;
  sc.height = 48;
  sc.width = 48;
  const AnnotatedFrame clean = synth_scene(9, sc);

  for (const ChallengeKind kind : kChallengedKinds) {
    for (int level = 1; level <= 5; ++level) {
      const Frame x = apply_challenge(clean.frame, {kind, level}, 55);
      const Frame y = apply_challenge(clean.frame, {kind, level}, 55);
      CHECK(x.pixels.byte_hash() == y.pixels.byte_hash());
      CHECK_NOTHROW(x.validate());
      CHECK(x.video_id == clean.frame.video_id);
    }
    // Haze and lens blur are closed-form given the level, so only the
    // particle-based kinds respond to the seed.
    if (kind == ChallengeKind::kRain || kind == ChallengeKind::kSnow ||
        kind == ChallengeKind::kDirtyLens) {
      const Frame z = apply_challenge(clean.frame, {kind, 3}, 56);
      CHECK(z.pixels.byte_hash() !=
            apply_challenge(clean.frame, {kind, 3}, 57).pixels.byte_hash());
    }
  }

  SECTION("kind none is rejected, as are bad levels") {
    CHECK_THROWS_AS(apply_challenge(clean.frame, {ChallengeKind::kNone, 0}, 1), Error);
    CHECK_THROWS_AS(apply_challenge(clean.frame, {ChallengeKind::kRain, 0}, 1), Error);
    CHECK_THROWS_AS(apply_challenge(clean.frame, {ChallengeKind::kRain, 6}, 1), Error);
  }
}

TEST_CASE("haze follows its closed form", "[synth]") {
  SceneConfig sc;
  sc.height = 32;
  sc.width = 32;
  const Frame clean = synth_scene(4, sc).frame;
  const SeverityProfile prof;
  for (int level = 1; level <= 5; ++level) {
    const Frame hazy = apply_challenge(clean, {ChallengeKind::kHaze, level}, 99);
    const double t = prof.haze_transmission[static_cast<std::size_t>(level - 1)];
    for (std::int64_t i = 0; i < clean.pixels.numel(); i += 37) {
      const double expect = clamp01(clean.pixels[i] * t + prof.haze_airlight * (1.0 - t));
      CHECK_THAT(hazy.pixels[i], Catch::Matchers::WithinAbs(expect, 1e-15));
    }
  }
}

TEST_CASE("lens blur preserves constant frames", "[synth]") {
  Frame flat(32, 32, "flat", 0);
  flat.pixels.fill(0.42);
  const Frame blurred = apply_challenge(flat, {ChallengeKind::kLensBlur, 4}, 3);
  for (std::int64_t i = 0; i < blurred.pixels.numel(); ++i)
    CHECK_THAT(blurred.pixels[i], Catch::Matchers::WithinAbs(0.42, 1e-12));
}

TEST_CASE("severity degrades structural similarity", "[synth]") {
  SceneConfig sc;
  sc.height = 64;
  sc.width = 64;
  for (const ChallengeKind kind : kChallengedKinds) {
    double prev = 1.0;
    bool monotone = true;
    double l1 = 0.0, l5 = 0.0;
    for (int level = 1; level <= 5; ++level) {
      double acc = 0.0;
      for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const AnnotatedFrame clean = synth_scene(200 + seed, sc);
        const Frame bad = apply_challenge(clean.frame, {kind, level}, 300 + seed);
        acc += ssim(clean.frame, bad);
      }
      acc /= 4.0;
      if (level == 1) l1 = acc;
      if (level == 5) l5 = acc;
      monotone &= (acc <= prev + 1e-9);
      prev = acc;
    }
    INFO("kind " << to_string(kind));
    CHECK(monotone);
    CHECK(l5 < l1);
    CHECK(l1 < 1.0);
  }
}

TEST_CASE("challenge_scene wires the reference and annotations", "[synth]") {
  SceneConfig sc;
  sc.height = 32;
  sc.width = 32;
  const AnnotatedFrame clean = synth_scene(17, sc);
  const AnnotatedFrame out = challenge_scene(clean, {ChallengeKind::kDirtyLens, 4}, 5);
  CHECK(out.challenge.kind == ChallengeKind::kDirtyLens);
  CHECK(out.challenge.level == 4);
  CHECK(out.signs == clean.signs);
  REQUIRE(out.clean_ref.has_value());
  CHECK(out.clean_ref->pixels.byte_hash() == clean.frame.pixels.byte_hash());
  CHECK(out.frame.pixels.byte_hash() != clean.frame.pixels.byte_hash());
  CHECK_NOTHROW(out.validate(14, /*training_record=*/true));

  CHECK_THROWS_AS(challenge_scene(out, {ChallengeKind::kRain, 1}, 6), Error);
}

TEST_CASE("severity profiles reject non-monotone tables", "[synth]") {
  SeverityProfile p;
  p.rain_streaks = {100, 90, 200, 400, 800};
  CHECK_THROWS_AS(p.validate(), Error);
  SeverityProfile q;
  q.haze_transmission = {0.5, 0.6, 0.4, 0.3, 0.2};
  CHECK_THROWS_AS(q.validate(), Error);
  SeverityProfile ok;
  CHECK_NOTHROW(ok.validate());
}
