#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "support/testutil.hpp"
#include "tsdr/checkpoint.hpp"

using namespace tsdr;
namespace fs = std::filesystem;

namespace {

fs::path tmp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "tsdr_ckpt_tests";
  fs::create_directories(dir);
  return dir / name;
}

bool same_bytes(const Tensor& a, const Tensor& b) {
  return a.same_shape(b) && a.byte_hash(1) == b.byte_hash(1) && a.byte_hash(7) == b.byte_hash(7);
}

}  // namespace

TEST_CASE("enhancer checkpoints round-trip bit-exactly") {
  EnhancerConfig cfg;
  cfg.base_channels = 4;
  cfg.num_residual_blocks = 1;
  cfg.seed = 9;
  EnhanceNet a(cfg);
  const Frame probe = testutil::random_frame(16, 16, 21);
  const Frame out_a = a.enhance(probe);

  const auto path = tmp_file("enhancer_rain.ckpt");
  save_enhancer(path.string(), a, ChallengeKind::kRain);
  LoadedEnhancer loaded = load_enhancer(path.string());

  CHECK(loaded.kind == ChallengeKind::kRain);
  CHECK(loaded.net.config().base_channels == 4);
  CHECK(loaded.net.config().num_residual_blocks == 1);
  CHECK(loaded.net.config().seed == 9);
  CHECK(nn::params_checksum(loaded.net.params()) == nn::params_checksum(a.params()));
  const Frame out_b = loaded.net.enhance(probe);
  CHECK(out_a.pixels.byte_hash(3) == out_b.pixels.byte_hash(3));
}

TEST_CASE("challenge classifier checkpoints carry running statistics") {
  ClassifierConfig cfg;
  cfg.input_size = 32;
  cfg.width_scale = 0.25;
  cfg.seed = 4;
  ChallengeClassifier a(cfg);

  // Push the batch-norm running stats away from their initial values.
  Rng rng(77);
  Tensor batch = Tensor::rand_uniform({2, 3, 32, 32}, rng);
  (void)a.forward(batch, /*train=*/true);

  const auto path = tmp_file("classifier.ckpt");
  save_challenge_classifier(path.string(), a);
  ChallengeClassifier b = load_challenge_classifier(path.string());

  CHECK(b.config().input_size == 32);
  CHECK(b.config().width_scale == 0.25);
  const auto buf_a = a.buffers();
  const auto buf_b = b.buffers();
  REQUIRE(buf_a.size() == buf_b.size());
  REQUIRE(!buf_a.empty());
  for (std::size_t i = 0; i < buf_a.size(); ++i) {
    CHECK(buf_a[i]->name == buf_b[i]->name);
    CHECK(same_bytes(buf_a[i]->value, buf_b[i]->value));
  }

  const Frame probe = testutil::random_frame(48, 48, 5);
  const auto pa = a.classify(probe);
  const auto pb = b.classify(probe);
  CHECK(pa.kind == pb.kind);
  for (int k = 0; k < kNumChallengeKinds; ++k) CHECK(pa.probs[static_cast<std::size_t>(k)] == pb.probs[static_cast<std::size_t>(k)]);
}

TEST_CASE("detector checkpoints preserve the frozen flag and weights") {
  DetectorConfig cfg;
  cfg.base_channels = 4;
  cfg.seed = 2;

  SECTION("frozen detector stays frozen") {
    SignDetector d(cfg);
    d.freeze();
    const auto path = tmp_file("detector.ckpt");
    save_detector(path.string(), d);
    SignDetector e = load_detector(path.string());
    CHECK(e.frozen());
    CHECK(e.weights_checksum() == d.weights_checksum());
    const Frame probe = testutil::random_frame(16, 16, 8);
    CHECK(d.segment(probe).byte_hash(2) == e.segment(probe).byte_hash(2));
  }

  SECTION("unfrozen detector stays unfrozen") {
    SignDetector d(cfg);
    const auto path = tmp_file("detector_unfrozen.ckpt");
    save_detector(path.string(), d);
    SignDetector e = load_detector(path.string());
    CHECK_FALSE(e.frozen());
    CHECK(e.weights_checksum() == d.weights_checksum());
  }
}

TEST_CASE("sign classifier checkpoints round-trip inference") {
  SignClassifierConfig cfg;
  cfg.num_classes = 5;
  cfg.input_size = 16;
  cfg.seed = 6;
  SignClassifier a(cfg);
  const auto path = tmp_file("sign_classifier.ckpt");
  save_sign_classifier(path.string(), a);
  SignClassifier b = load_sign_classifier(path.string());

  CHECK(b.config().num_classes == 5);
  CHECK(b.config().input_size == 16);
  const Frame probe = testutil::random_frame(24, 24, 11);
  Detection det;
  det.x = 3;
  det.y = 4;
  det.w = 10;
  det.h = 9;
  double conf_a = 0.0, conf_b = 0.0;
  CHECK(a.classify_crop(probe, det, &conf_a) == b.classify_crop(probe, det, &conf_b));
  CHECK(conf_a == conf_b);
}

TEST_CASE("checkpoint loading rejects malformed files") {
  SECTION("missing file") {
    CHECK_THROWS_AS(load_detector((tmp_file("nope") / "missing.ckpt").string()), Error);
  }

  SECTION("wrong model tag") {
    DetectorConfig cfg;
    cfg.base_channels = 4;
    SignDetector d(cfg);
    const auto path = tmp_file("tag_mismatch.ckpt");
    save_detector(path.string(), d);
    CHECK_THROWS_AS(load_enhancer(path.string()), Error);
  }

  SECTION("truncated payload") {
    EnhancerConfig cfg;
    cfg.base_channels = 4;
    cfg.num_residual_blocks = 1;
    EnhanceNet a(cfg);
    const auto path = tmp_file("trunc.ckpt");
    save_enhancer(path.string(), a, ChallengeKind::kSnow);
    const auto full = fs::file_size(path);
    fs::resize_file(path, full - 16);
    CHECK_THROWS_AS(load_enhancer(path.string()), Error);
  }

  SECTION("corrupted magic") {
    DetectorConfig cfg;
    cfg.base_channels = 4;
    SignDetector d(cfg);
    const auto path = tmp_file("bad_magic.ckpt");
    save_detector(path.string(), d);
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.put('X');
    f.close();
    CHECK_THROWS_AS(load_detector(path.string()), Error);
  }
}
