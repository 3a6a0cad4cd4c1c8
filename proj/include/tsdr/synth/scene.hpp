#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "tsdr/rng.hpp"
#include "tsdr/types.hpp"

namespace tsdr {

enum class BackgroundTexture : int { kFlat = 0, kGradient = 1, kNoise = 2 };

inline const char* to_string(BackgroundTexture t) {
  switch (t) {
    case BackgroundTexture::kFlat: return "flat";
    case BackgroundTexture::kGradient: return "gradient";
    case BackgroundTexture::kNoise: return "noise";
  }
  return "?";
}

inline BackgroundTexture background_texture_from_string(const std::string& s) {
  if (s == "flat") return BackgroundTexture::kFlat;
  if (s == "gradient") return BackgroundTexture::kGradient;
  if (s == "noise") return BackgroundTexture::kNoise;
  throw Error("unknown background texture: '" + s + "'");
}

/// Parameters for the toy scene generator.
struct SceneConfig {
  std::int64_t height = 64;
  std::int64_t width = 64;
  int num_sign_classes = 14;
  int min_signs = 1;
  int max_signs = 3;
  double sign_min_frac = 0.16;  // sign box edge, fraction of min(height,width)
  double sign_max_frac = 0.30;
  BackgroundTexture texture = BackgroundTexture::kNoise;
  int distractors = 3;  // muted background rectangles
  std::string video_id = "scene";

  void validate() const {
    require(height >= 16 && width >= 16 && height % 4 == 0 && width % 4 == 0,
            "scene config: frame dims must be >= 16 and divisible by 4");
    require(num_sign_classes >= 1, "scene config: need at least one sign class");
    require(min_signs >= 0 && max_signs >= min_signs, "scene config: bad sign count range");
    require(sign_min_frac > 0 && sign_max_frac >= sign_min_frac && sign_max_frac <= 0.9,
            "scene config: bad sign size range");
  }
};

namespace detail {

// Membership test for the sign silhouettes, in box-local coordinates
// normalized to [-1,1]. shape_id selects one of seven silhouettes.
inline bool sign_shape_hit(int shape_id, double u, double v) {
  const double au = std::abs(u), av = std::abs(v);
  switch (shape_id % 7) {
    case 0: return u * u + v * v <= 1.0;                       // circle
    case 1: return au <= 0.92 && av <= 0.92;                   // square
    case 2: return v >= -0.9 && av <= 1.0 && au <= (v + 1.0) * 0.52;  // triangle (apex up)
    case 3: return v <= 0.9 && av <= 1.0 && au <= (1.0 - v) * 0.52;   // triangle (apex down)
    case 4: return au + av <= 1.0;                             // diamond
    case 5: return au <= 0.95 && av <= 0.95 && au + av <= 1.35;       // octagon
    case 6: {                                                  // ring
      const double r2 = u * u + v * v;
      return r2 <= 1.0 && r2 >= 0.25;
    }
  }
  return false;
}

struct SignRgb {
  double r, g, b;
};

// Two palettes per shape give 14 distinct (shape, colour) classes.
inline SignRgb sign_border_color(int class_id) {
  return (class_id / 7) % 2 == 0 ? SignRgb{0.85, 0.08, 0.10} : SignRgb{0.05, 0.22, 0.80};
}
inline SignRgb sign_fill_color(int class_id) {
  return (class_id / 7) % 2 == 0 ? SignRgb{0.97, 0.95, 0.90} : SignRgb{0.95, 0.83, 0.15};
}

}  // namespace detail

/// Generate a challenge-free toy scene: a smooth background, a few muted
/// distractor rectangles, and 'signs' drawn as bordered geometric silhouettes,
/// one distinct (shape, palette) pair per class id. Annotations are the exact
/// placement boxes. Deterministic per seed.
inline AnnotatedFrame synth_scene(std::uint64_t rng_seed, const SceneConfig& config) {
  config.validate();
  Rng rng = Rng::derive(rng_seed, "scene");
  const std::int64_t h = config.height, w = config.width;

  AnnotatedFrame out;
  out.frame = Frame(h, w, config.video_id, 0);
  out.challenge = ChallengeLabel{ChallengeKind::kNone, 0};

  // Background.
  const double base = rng.uniform(0.35, 0.55);
  const double tint_r = rng.uniform(-0.04, 0.04), tint_b = rng.uniform(-0.04, 0.04);
  const double grad = (config.texture == BackgroundTexture::kFlat) ? 0.0 : rng.uniform(0.10, 0.25);
  // Low-frequency value noise from a bilinearly interpolated coarse grid.
  const std::int64_t gh = 5, gw = 5;
  Tensor grid({gh, gw});
  for (std::int64_t i = 0; i < gh * gw; ++i) grid[i] = rng.uniform(-1.0, 1.0);
  const double noise_amp = (config.texture == BackgroundTexture::kNoise) ? 0.06 : 0.0;

  for (std::int64_t y = 0; y < h; ++y) {
    const double fy = static_cast<double>(y) / static_cast<double>(h - 1);
    for (std::int64_t x = 0; x < w; ++x) {
      const double fx = static_cast<double>(x) / static_cast<double>(w - 1);
      double v = base + grad * (0.5 - fy);
      if (noise_amp > 0.0) {
        const double gy = fy * static_cast<double>(gh - 1), gx = fx * static_cast<double>(gw - 1);
        const auto y0 = static_cast<std::int64_t>(gy), x0 = static_cast<std::int64_t>(gx);
        const std::int64_t y1 = std::min(y0 + 1, gh - 1), x1 = std::min(x0 + 1, gw - 1);
        const double ty = gy - static_cast<double>(y0), tx = gx - static_cast<double>(x0);
        const double n = (grid.at2(y0, x0) * (1 - tx) + grid.at2(y0, x1) * tx) * (1 - ty) +
                         (grid.at2(y1, x0) * (1 - tx) + grid.at2(y1, x1) * tx) * ty;
        v += noise_amp * n;
      }
      out.frame.set(y, x, 0, clamp01(v + tint_r));
      out.frame.set(y, x, 1, clamp01(v));
      out.frame.set(y, x, 2, clamp01(v + tint_b));
    }
  }

  // Muted distractor rectangles (buildings, road patches): never sign-like.
  for (int d = 0; d < config.distractors; ++d) {
    const std::int64_t dw = rng.uniform_int(w / 8, w / 3);
    const std::int64_t dh = rng.uniform_int(h / 8, h / 3);
    const std::int64_t dx = rng.uniform_int(0, w - dw);
    const std::int64_t dy = rng.uniform_int(0, h - dh);
    const double shade = rng.uniform(-0.12, 0.12);
    for (std::int64_t y = dy; y < dy + dh; ++y)
      for (std::int64_t x = dx; x < dx + dw; ++x)
        for (std::int64_t c = 0; c < 3; ++c)
          out.frame.set(y, x, c, clamp01(out.frame.at(y, x, c) + shade));
  }

  // Signs. Rejection-sample non-overlapping boxes with a 2 px margin.
  const auto n_signs = static_cast<int>(rng.uniform_int(config.min_signs, config.max_signs));
  const std::int64_t smin = std::max<std::int64_t>(
      6, static_cast<std::int64_t>(config.sign_min_frac * static_cast<double>(std::min(h, w))));
  const std::int64_t smax = std::max(
      smin, static_cast<std::int64_t>(config.sign_max_frac * static_cast<double>(std::min(h, w))));
  require(smax + 4 <= std::min(h, w), "scene config: frame too small for requested sign size");

  for (int s = 0; s < n_signs; ++s) {
    bool placed = false;
    for (int attempt = 0; attempt < 120 && !placed; ++attempt) {
      const std::int64_t size = rng.uniform_int(smin, smax);
      const std::int64_t sx = rng.uniform_int(2, w - size - 2);
      const std::int64_t sy = rng.uniform_int(2, h - size - 2);
      bool clash = false;
      for (const auto& other : out.signs) {
        const bool sep = sx + size + 2 <= other.x || other.x + other.w + 2 <= sx ||
                         sy + size + 2 <= other.y || other.y + other.h + 2 <= sy;
        if (!sep) clash = true;
      }
      if (clash) continue;

      const int class_id = static_cast<int>(rng.uniform_int(0, config.num_sign_classes - 1));
      const auto border = detail::sign_border_color(class_id);
      const auto fill = detail::sign_fill_color(class_id);
      const double border_frac = 0.30;
      // 2x2 supersampled coverage for soft edges.
      for (std::int64_t y = sy; y < sy + size; ++y)
        for (std::int64_t x = sx; x < sx + size; ++x) {
          double cov_border = 0.0, cov_fill = 0.0;
          for (int su = 0; su < 2; ++su)
            for (int sv = 0; sv < 2; ++sv) {
              const double u = (static_cast<double>(x - sx) + 0.25 + 0.5 * su) /
                                   static_cast<double>(size) * 2.0 - 1.0;
              const double v = (static_cast<double>(y - sy) + 0.25 + 0.5 * sv) /
                                   static_cast<double>(size) * 2.0 - 1.0;
              if (detail::sign_shape_hit(class_id, u, v)) {
                const double inner_u = u / (1.0 - border_frac), inner_v = v / (1.0 - border_frac);
                if (std::abs(inner_u) <= 1.0 && std::abs(inner_v) <= 1.0 &&
                    detail::sign_shape_hit(class_id, inner_u, inner_v))
                  cov_fill += 0.25;
                else
                  cov_border += 0.25;
              }
            }
          if (cov_border + cov_fill <= 0.0) continue;
          const double r =
              out.frame.at(y, x, 0) * (1 - cov_border - cov_fill) + border.r * cov_border + fill.r * cov_fill;
          const double g =
              out.frame.at(y, x, 1) * (1 - cov_border - cov_fill) + border.g * cov_border + fill.g * cov_fill;
          const double b =
              out.frame.at(y, x, 2) * (1 - cov_border - cov_fill) + border.b * cov_border + fill.b * cov_fill;
          out.frame.set(y, x, 0, clamp01(r));
          out.frame.set(y, x, 1, clamp01(g));
          out.frame.set(y, x, 2, clamp01(b));
        }
      out.signs.push_back({sx, sy, size, size, class_id});
      placed = true;
    }
    if (!placed) {
      require(std::cmp_greater_equal(out.signs.size(), config.min_signs),
              "synth_scene: frame too small to place requested signs");
      break;  // optional extra signs may be dropped when crowded
    }
  }
  return out;
}

}  // namespace tsdr
