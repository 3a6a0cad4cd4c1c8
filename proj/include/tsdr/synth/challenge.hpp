#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "tsdr/image.hpp"
#include "tsdr/rng.hpp"
#include "tsdr/types.hpp"

namespace tsdr {

/// Per-level parameters of the five challenge generators. Severity must grow
/// monotonically with the level; validate() enforces that.
///
/// Counts tagged "per 256x256" scale with frame area; geometric sizes tagged
/// "at 256 px" scale with frame width, so coverage fractions are resolution
/// independent.
struct SeverityProfile {
  std::array<double, 5> rain_streaks{60, 120, 240, 480, 960};  // per 256x256
  std::array<double, 5> rain_length{10, 12, 14, 17, 20};       // px at 256 px
  double rain_min_length = 6.0;
  double rain_brightness = 0.40;

  std::array<double, 5> snow_flakes{50, 100, 200, 400, 800};  // per 256x256
  std::array<double, 5> snow_spots{1, 2, 4, 8, 16};           // per frame
  double snow_spot_alpha = 0.55;

  std::array<double, 5> haze_transmission{0.88, 0.72, 0.56, 0.40, 0.24};
  double haze_airlight = 0.85;

  std::array<double, 5> dirt_blobs{4, 7, 11, 16, 22};  // per frame
  std::array<double, 5> dirt_opacity{0.30, 0.40, 0.50, 0.62, 0.75};

  std::array<double, 5> blur_radius{1, 2, 3, 5, 7};  // px at 256 px width
  double blur_min_radius = 0.75;

  void validate() const {
    auto nondecreasing = [](const std::array<double, 5>& a, const char* what) {
      for (int i = 1; i < 5; ++i)
        require(a[i] >= a[i - 1], std::string("severity profile: ") + what +
                                      " must be non-decreasing across levels");
    };
    nondecreasing(rain_streaks, "rain_streaks");
    nondecreasing(rain_length, "rain_length");
    nondecreasing(snow_flakes, "snow_flakes");
    nondecreasing(snow_spots, "snow_spots");
    nondecreasing(dirt_blobs, "dirt_blobs");
    nondecreasing(dirt_opacity, "dirt_opacity");
    nondecreasing(blur_radius, "blur_radius");
    for (int i = 1; i < 5; ++i)
      require(haze_transmission[i] <= haze_transmission[i - 1],
              "severity profile: haze_transmission must be non-increasing across levels");
    for (double t : haze_transmission)
      require(t > 0.0 && t <= 1.0, "severity profile: haze_transmission must lie in (0,1]");
    require(haze_airlight >= 0.0 && haze_airlight <= 1.0,
            "severity profile: haze_airlight must lie in [0,1]");
    for (double o : dirt_opacity)
      require(o >= 0.0 && o <= 1.0, "severity profile: dirt_opacity must lie in [0,1]");
    require(blur_min_radius > 0.0, "severity profile: blur_min_radius must be positive");
  }
};

namespace detail {

// Additive bilinear splat of value v at continuous position (x, y), clipped later.
inline void splat_add(Frame& f, double y, double x, double v) {
  const auto x0 = static_cast<std::int64_t>(std::floor(x));
  const auto y0 = static_cast<std::int64_t>(std::floor(y));
  const double tx = x - static_cast<double>(x0), ty = y - static_cast<double>(y0);
  const double wts[4] = {(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty};
  const std::int64_t xs[4] = {x0, x0 + 1, x0, x0 + 1};
  const std::int64_t ys[4] = {y0, y0, y0 + 1, y0 + 1};
  for (int i = 0; i < 4; ++i) {
    if (xs[i] < 0 || xs[i] >= f.width() || ys[i] < 0 || ys[i] >= f.height()) continue;
    for (std::int64_t c = 0; c < 3; ++c)
      f.set(ys[i], xs[i], c, f.at(ys[i], xs[i], c) + v * wts[i]);
  }
}

// Blend pixel toward a colour with weight a in [0,1].
inline void blend_px(Frame& f, std::int64_t y, std::int64_t x, double a, double r, double g,
                     double b) {
  if (x < 0 || x >= f.width() || y < 0 || y >= f.height() || a <= 0.0) return;
  a = std::min(a, 1.0);
  f.set(y, x, 0, f.at(y, x, 0) * (1 - a) + r * a);
  f.set(y, x, 1, f.at(y, x, 1) * (1 - a) + g * a);
  f.set(y, x, 2, f.at(y, x, 2) * (1 - a) + b * a);
}

inline std::int64_t area_scaled_count(double per_256, std::int64_t h, std::int64_t w) {
  const double scale = static_cast<double>(h * w) / (256.0 * 256.0);
  return std::max<std::int64_t>(1, std::llround(per_256 * scale));
}

// Coverage-weighted disk kernel: each cell holds the supersampled fraction of
// the cell covered by a disk of the given radius. radius <= 0 is the identity.
inline std::vector<double> disk_kernel(double radius, std::int64_t& half) {
  if (radius <= 0.0) {
    half = 0;
    return {1.0};
  }
  half = static_cast<std::int64_t>(std::ceil(radius));
  const std::int64_t k = 2 * half + 1;
  std::vector<double> kern(static_cast<std::size_t>(k * k), 0.0);
  constexpr int kSs = 4;  // 4x4 supersampling per cell
  double total = 0.0;
  for (std::int64_t ky = 0; ky < k; ++ky)
    for (std::int64_t kx = 0; kx < k; ++kx) {
      double cov = 0.0;
      for (int sy = 0; sy < kSs; ++sy)
        for (int sx = 0; sx < kSs; ++sx) {
          const double dy = static_cast<double>(ky - half) + (sy + 0.5) / kSs - 0.5;
          const double dx = static_cast<double>(kx - half) + (sx + 0.5) / kSs - 0.5;
          if (dy * dy + dx * dx <= radius * radius) cov += 1.0;
        }
      kern[static_cast<std::size_t>(ky * k + kx)] = cov;
      total += cov;
    }
  for (double& v : kern) v /= total;
  return kern;
}

inline Frame convolve_reflect(const Frame& src, const std::vector<double>& kern,
                              std::int64_t half) {
  if (half == 0) return src;
  const std::int64_t h = src.height(), w = src.width(), k = 2 * half + 1;
  Frame out(h, w, src.video_id, src.frame_idx);
  auto reflect = [](std::int64_t i, std::int64_t n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
    return std::clamp<std::int64_t>(i, 0, n - 1);
  };
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (std::int64_t ky = 0; ky < k; ++ky) {
          const std::int64_t sy = reflect(y + ky - half, h);
          for (std::int64_t kx = 0; kx < k; ++kx) {
            const std::int64_t sx = reflect(x + kx - half, w);
            acc += kern[static_cast<std::size_t>(ky * k + kx)] * src.at(sy, sx, c);
          }
        }
        out.set(y, x, c, acc);
      }
  return out;
}

}  // namespace detail

/// Apply one synthetic challenge to a frame. Deterministic: identical
/// (frame, label, rng_seed) always produce identical output. Pixel values are
/// clipped to [0,1]. label.kind must name a real challenge.
inline Frame apply_challenge(const Frame& frame, const ChallengeLabel& label,
                             std::uint64_t rng_seed, const SeverityProfile& profile = {}) {
  frame.validate();
  label.validate();
  profile.validate();
  require(label.kind != ChallengeKind::kNone, "apply_challenge: kind must not be 'none'");
  const int li = label.level - 1;
  const std::int64_t h = frame.height(), w = frame.width();
  const double wscale = static_cast<double>(w) / 256.0;
  Rng rng = Rng::derive(rng_seed, "challenge", to_string(label.kind), label.level);
  Frame out = frame;

  switch (label.kind) {
    case ChallengeKind::kRain: {
      const std::int64_t n = detail::area_scaled_count(profile.rain_streaks[li], h, w);
      const double wind = rng.uniform(65.0, 105.0) * kPi / 180.0;  // from horizontal
      for (std::int64_t i = 0; i < n; ++i) {
        const double cx = rng.uniform(-4.0, static_cast<double>(w) + 4.0);
        const double cy = rng.uniform(-4.0, static_cast<double>(h) + 4.0);
        const double ang = wind + rng.uniform(-0.10, 0.10);
        const double len = std::max(profile.rain_min_length,
                                    profile.rain_length[li] * wscale * rng.uniform(0.7, 1.3));
        const double bright = profile.rain_brightness * rng.uniform(0.7, 1.0);
        const double dx = std::cos(ang), dy = std::sin(ang);
        for (double t = -len / 2; t <= len / 2; t += 0.5)
          detail::splat_add(out, cy + t * dy, cx + t * dx, bright * 0.5);
      }
      break;
    }
    case ChallengeKind::kSnow: {
      const std::int64_t n = detail::area_scaled_count(profile.snow_flakes[li], h, w);
      for (std::int64_t i = 0; i < n; ++i) {
        const double cx = rng.uniform(0.0, static_cast<double>(w) - 1.0);
        const double cy = rng.uniform(0.0, static_cast<double>(h) - 1.0);
        const double r = rng.uniform(0.6, 1.5) * std::max(1.0, wscale);
        const double alpha = rng.uniform(0.55, 0.9);
        const auto rad = static_cast<std::int64_t>(std::ceil(r));
        for (std::int64_t oy = -rad; oy <= rad; ++oy)
          for (std::int64_t ox = -rad; ox <= rad; ++ox) {
            const double d = std::sqrt(static_cast<double>(oy * oy + ox * ox));
            if (d > r) continue;
            const double fall = 0.5 * (1.0 + std::cos(kPi * d / r));
            detail::blend_px(out, static_cast<std::int64_t>(std::llround(cy)) + oy,
                             static_cast<std::int64_t>(std::llround(cx)) + ox, alpha * fall, 1.0,
                             1.0, 1.0);
          }
      }
      // Larger occlusion spots: accumulated snow on the lens.
      const auto spots = static_cast<std::int64_t>(std::llround(profile.snow_spots[li]));
      for (std::int64_t i = 0; i < spots; ++i) {
        const double cx = rng.uniform(0.0, static_cast<double>(w) - 1.0);
        const double cy = rng.uniform(0.0, static_cast<double>(h) - 1.0);
        const double r = rng.uniform(0.04, 0.09) * static_cast<double>(w);
        const auto rad = static_cast<std::int64_t>(std::ceil(r));
        for (std::int64_t oy = -rad; oy <= rad; ++oy)
          for (std::int64_t ox = -rad; ox <= rad; ++ox) {
            const double d = std::sqrt(static_cast<double>(oy * oy + ox * ox));
            if (d > r) continue;
            const double fall = 0.5 * (1.0 + std::cos(kPi * d / r));
            detail::blend_px(out, static_cast<std::int64_t>(std::llround(cy)) + oy,
                             static_cast<std::int64_t>(std::llround(cx)) + ox,
                             profile.snow_spot_alpha * fall, 0.97, 0.97, 0.99);
          }
      }
      break;
    }
    case ChallengeKind::kHaze: {
      const double t = profile.haze_transmission[li];
      const double a = profile.haze_airlight;
      for (std::int64_t i = 0; i < out.pixels.numel(); ++i)
        out.pixels[i] = out.pixels[i] * t + a * (1.0 - t);
      break;
    }
    case ChallengeKind::kDirtyLens: {
      const auto blobs = static_cast<std::int64_t>(std::llround(profile.dirt_blobs[li]));
      for (std::int64_t i = 0; i < blobs; ++i) {
        const double cx = rng.uniform(0.0, static_cast<double>(w) - 1.0);
        const double cy = rng.uniform(0.0, static_cast<double>(h) - 1.0);
        const double rx = rng.uniform(0.05, 0.12) * static_cast<double>(w);
        const double ry = rx * rng.uniform(0.7, 1.3);
        const double opac = profile.dirt_opacity[li] * rng.uniform(0.85, 1.0);
        const double cr = 0.22 + rng.uniform(-0.05, 0.05);
        const double cg = 0.18 + rng.uniform(-0.04, 0.04);
        const double cb = 0.13 + rng.uniform(-0.03, 0.03);
        const auto radx = static_cast<std::int64_t>(std::ceil(rx));
        const auto rady = static_cast<std::int64_t>(std::ceil(ry));
        for (std::int64_t oy = -rady; oy <= rady; ++oy)
          for (std::int64_t ox = -radx; ox <= radx; ++ox) {
            const double d = std::sqrt(static_cast<double>(ox * ox) / (rx * rx) +
                                       static_cast<double>(oy * oy) / (ry * ry));
            if (d > 1.0) continue;
            const double fall = 0.5 * (1.0 + std::cos(kPi * d));
            detail::blend_px(out, static_cast<std::int64_t>(std::llround(cy)) + oy,
                             static_cast<std::int64_t>(std::llround(cx)) + ox, opac * fall, cr, cg,
                             cb);
          }
      }
      break;
    }
    case ChallengeKind::kLensBlur: {
      const double radius = std::max(profile.blur_min_radius, profile.blur_radius[li] * wscale);
      std::int64_t half = 0;
      const auto kern = detail::disk_kernel(radius, half);
      out = detail::convolve_reflect(out, kern, half);
      break;
    }
    case ChallengeKind::kNone:
      break;  // unreachable; rejected above
  }

  for (std::int64_t i = 0; i < out.pixels.numel(); ++i) out.pixels[i] = clamp01(out.pixels[i]);
  return out;
}

/// Convenience: challenge a clean annotated frame, keeping the clean original
/// as the restoration reference.
inline AnnotatedFrame challenge_scene(const AnnotatedFrame& clean, const ChallengeLabel& label,
                                      std::uint64_t rng_seed,
                                      const SeverityProfile& profile = {}) {
  require(clean.challenge.kind == ChallengeKind::kNone,
          "challenge_scene: input must be challenge-free");
  AnnotatedFrame out;
  out.frame = apply_challenge(clean.frame, label, rng_seed, profile);
  out.signs = clean.signs;
  out.challenge = label;
  out.clean_ref = clean.frame;
  return out;
}

}  // namespace tsdr
