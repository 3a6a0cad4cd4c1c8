#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>

#include "support/testutil.hpp"
#include "tsdr/image.hpp"
#include "tsdr/mask.hpp"
#include "tsdr/patch.hpp"
#include "tsdr/png_io.hpp"

using namespace tsdr;
using testutil::random_frame;

namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("tsdr_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

/// Frame whose channel values sit exactly on the 8-bit grid, so a PNG round
/// trip must reproduce it bit for bit.
Frame quantized_frame(std::int64_t h, std::int64_t w, std::uint64_t seed) {
  Rng rng(seed);
  Frame f(h, w, "png", 1);
  for (std::int64_t i = 0; i < f.pixels.numel(); ++i)
    f.pixels[i] = static_cast<double>(rng.uniform_int(0, 255)) / 255.0;
  return f;
}

std::uint64_t file_hash(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return fnv1a64(bytes.data(), bytes.size());
}

}  // namespace

TEST_CASE("frame validation enforces the pixel contract", "[image]") {
  Frame ok(16, 20, "v", 0);
  CHECK_NOTHROW(ok.validate());

  Frame bad_range = ok;
  bad_range.set(3, 4, 1, 1.5);
  CHECK_THROWS_AS(bad_range.validate(), Error);

  Frame tiny(16, 16);
  tiny.pixels = Tensor::zeros({3, 12, 16});
  CHECK_THROWS_AS(tiny.validate(), Error);

  Frame odd(16, 16);
  odd.pixels = Tensor::zeros({3, 18, 16});
  CHECK_THROWS_AS(odd.validate(), Error);
}

TEST_CASE("luma applies the 601 weights", "[image]") {
  Frame f(16, 16);
  f.set(2, 3, 0, 1.0);
  const Tensor l = luma(f);
  CHECK(l.dim(0) == 16);
  CHECK_THAT(l.at2(2, 3), Catch::Matchers::WithinAbs(0.299, 1e-15));
  CHECK(l.at2(0, 0) == 0.0);
}

TEST_CASE("bilinear resize fundamentals", "[image]") {
  const Frame f = random_frame(16, 24, 3);

  SECTION("identity at equal size") {
    const Tensor r = bilinear_resize_chw(f.pixels, 16, 24);
    CHECK(r.byte_hash() == f.pixels.byte_hash());
  }

  SECTION("constants stay constant") {
    const Tensor c = Tensor::full({3, 8, 8}, 0.37);
    const Tensor r = bilinear_resize_chw(c, 13, 5);
    for (std::int64_t i = 0; i < r.numel(); ++i)
      CHECK_THAT(r[i], Catch::Matchers::WithinAbs(0.37, 1e-15));
  }

  SECTION("output stays within the input range") {
    const Tensor r = bilinear_resize_chw(f.pixels, 40, 12);
    for (std::int64_t i = 0; i < r.numel(); ++i) {
      CHECK(r[i] >= 0.0);
      CHECK(r[i] <= 1.0);
    }
  }

  SECTION("2x upsample interpolates midpoints") {
    Tensor src({1, 1, 2});
    src[0] = 0.0;
    src[1] = 1.0;
    const Tensor r = bilinear_resize_chw(src, 1, 4);
    CHECK_THAT(r[0], Catch::Matchers::WithinAbs(0.0, 1e-15));
    CHECK_THAT(r[1], Catch::Matchers::WithinAbs(0.25, 1e-15));
    CHECK_THAT(r[2], Catch::Matchers::WithinAbs(0.75, 1e-15));
    CHECK_THAT(r[3], Catch::Matchers::WithinAbs(1.0, 1e-15));
  }
}

TEST_CASE("crop_chw cuts exact windows", "[image]") {
  const Frame f = random_frame(16, 16, 9);
  const Tensor c = crop_chw(f.pixels, 3, 5, 4, 2);
  CHECK(c.dim(0) == 3);
  CHECK(c.dim(1) == 2);
  CHECK(c.dim(2) == 4);
  CHECK(c.at3(1, 1, 2) == f.pixels.at3(1, 6, 5));
  CHECK_THROWS_AS(crop_chw(f.pixels, 14, 0, 4, 4), Error);
  CHECK_THROWS_AS(crop_chw(f.pixels, -1, 0, 4, 4), Error);
}

TEST_CASE("rasterize_mask is the union of the boxes", "[image]") {
  const std::vector<SignAnnotation> signs = {{2, 3, 4, 2, 0}, {4, 4, 3, 3, 1}};
  const Tensor m = rasterize_mask(signs, 10, 12);
  CHECK(m.dim(0) == 10);
  CHECK(m.dim(1) == 12);
  double total = 0.0;
  for (std::int64_t i = 0; i < m.numel(); ++i) {
    CHECK((m[i] == 0.0 || m[i] == 1.0));
    total += m[i];
  }
  CHECK(total == 8 + 9 - 2);  // two cells overlap and count once
  CHECK(m.at2(3, 2) == 1.0);
  CHECK(m.at2(4, 4) == 1.0);
  CHECK(m.at2(0, 0) == 0.0);

  SECTION("no signs means an all-zero mask") {
    const Tensor z = rasterize_mask({}, 4, 4);
    for (std::int64_t i = 0; i < z.numel(); ++i) CHECK(z[i] == 0.0);
  }

  SECTION("boxes must stay inside the canvas") {
    CHECK_THROWS_AS(rasterize_mask({{10, 0, 4, 2, 0}}, 10, 12), Error);
  }
}

TEST_CASE("png round trip is exact on the 8-bit grid", "[image]") {
  const auto dir = temp_dir("png");
  const Frame f = quantized_frame(20, 16, 77);
  const std::string path = (dir / "frame.png").string();
  write_png(path, f);

  const auto [h, w] = read_png_size(path);
  CHECK(h == 20);
  CHECK(w == 16);

  const Frame g = read_png(path);
  REQUIRE(g.height() == 20);
  REQUIRE(g.width() == 16);
  CHECK(g.pixels.byte_hash() == f.pixels.byte_hash());

  SECTION("writing the same frame twice produces identical bytes") {
    const std::string again = (dir / "frame2.png").string();
    write_png(again, f);
    CHECK(file_hash(path) == file_hash(again));
  }

  SECTION("grayscale writer quantizes a [0,1] map") {
    Tensor map({18, 18});
    for (std::int64_t i = 0; i < map.numel(); ++i)
      map[i] = static_cast<double>(i % 256) / 255.0;
    const std::string gpath = (dir / "mask.png").string();
    write_png_gray(gpath, map);
    const Frame back = read_png(gpath);
    REQUIRE(back.height() == 18);
    for (std::int64_t y = 0; y < 18; ++y)
      for (std::int64_t x = 0; x < 18; ++x) {
        CHECK(back.at(y, x, 0) == back.at(y, x, 1));
        CHECK_THAT(back.at(y, x, 0),
                   Catch::Matchers::WithinAbs(map.at2(y, x), 1e-12));
      }
  }

  SECTION("reading a missing file fails loudly") {
    CHECK_THROWS_AS(read_png((dir / "absent.png").string()), Error);
    CHECK_THROWS_AS(read_png_size((dir / "absent.png").string()), Error);
  }
  fs::remove_all(dir);
}

TEST_CASE("sign patches anchor a complete sign", "[image]") {
  AnnotatedFrame rec;
  rec.frame = random_frame(48, 64, 5);
  rec.clean_ref = random_frame(48, 64, 6);
  rec.signs = {{4, 6, 10, 8, 2}, {40, 30, 12, 12, 1}, {20, 10, 6, 6, 0}};
  rec.challenge = {ChallengeKind::kRain, 2};

  SECTION("same seed, same window; different seeds move it") {
    const PatchPair a = crop_sign_patch(rec, 24, 11);
    const PatchPair b = crop_sign_patch(rec, 24, 11);
    CHECK(a.x0 == b.x0);
    CHECK(a.y0 == b.y0);
    CHECK(a.challenged.pixels.byte_hash() == b.challenged.pixels.byte_hash());
    std::set<std::pair<std::int64_t, std::int64_t>> corners;
    for (std::uint64_t s = 0; s < 32; ++s) {
      const PatchPair p = crop_sign_patch(rec, 24, s);
      corners.insert({p.x0, p.y0});
    }
    CHECK(corners.size() > 1);
  }

  SECTION("every crop keeps one sign complete and all boxes local") {
    for (std::uint64_t s = 0; s < 100; ++s) {
      const PatchPair p = crop_sign_patch(rec, 24, s);
      CHECK(p.challenged.height() == 24);
      CHECK(p.challenged.width() == 24);
      REQUIRE_FALSE(p.signs.empty());
      bool complete = false;
      for (const auto& sb : p.signs) {
        CHECK(sb.x >= 0);
        CHECK(sb.y >= 0);
        CHECK(sb.x + sb.w <= 24);
        CHECK(sb.y + sb.h <= 24);
        for (const auto& orig : rec.signs)
          complete |= (sb.w == orig.w && sb.h == orig.h && sb.class_id == orig.class_id);
      }
      CHECK(complete);
    }
  }

  SECTION("both planes cut the identical window") {
    const PatchPair p = crop_sign_patch(rec, 20, 3);
    for (std::int64_t y = 0; y < p.challenged.height(); ++y)
      for (std::int64_t x = 0; x < p.challenged.width(); ++x)
        for (std::int64_t c = 0; c < 3; ++c) {
          CHECK(p.challenged.at(y, x, c) == rec.frame.at(p.y0 + y, p.x0 + x, c));
          CHECK(p.clean.at(y, x, c) == rec.clean_ref->at(p.y0 + y, p.x0 + x, c));
        }
  }

  SECTION("patch size rounds up to a multiple of four and clamps to the frame") {
    const PatchPair p = crop_sign_patch(rec, 21, 3);
    CHECK(p.challenged.height() == 24);
    CHECK(p.challenged.width() == 24);
    const PatchPair whole = crop_sign_patch(rec, 999, 3);
    CHECK(whole.challenged.height() == 48);
    CHECK(whole.challenged.width() == 64);
    CHECK(whole.x0 == 0);
    CHECK(whole.y0 == 0);
    CHECK(whole.signs.size() == rec.signs.size());
  }

  SECTION("a record without clean reference mirrors the frame") {
    AnnotatedFrame plain;
    plain.frame = random_frame(32, 32, 8);
    plain.signs = {{5, 5, 8, 8, 0}};
    const PatchPair p = crop_sign_patch(plain, 16, 1);
    CHECK(p.clean.pixels.byte_hash() == p.challenged.pixels.byte_hash());
  }

  SECTION("sign-free records are rejected") {
    AnnotatedFrame empty;
    empty.frame = random_frame(32, 32, 8);
    CHECK_THROWS_AS(crop_sign_patch(empty, 16, 1), Error);
  }
}
