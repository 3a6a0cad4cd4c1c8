#pragma once

#include <array>
#include <cmath>

#include "tsdr/image.hpp"
#include "tsdr/losses.hpp"

namespace tsdr {

namespace detail {

inline const std::array<double, 11 * 11>& ssim_window() {
  static const std::array<double, 11 * 11> w = [] {
    std::array<double, 11 * 11> k{};
    double total = 0.0;
    for (int i = 0; i < 11; ++i)
      for (int j = 0; j < 11; ++j) {
        const double dy = i - 5, dx = j - 5;
        k[static_cast<std::size_t>(i * 11 + j)] =
            std::exp(-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5));
        total += k[static_cast<std::size_t>(i * 11 + j)];
      }
    for (double& v : k) v /= total;
    return k;
  }();
  return w;
}

}  // namespace detail

/// Structural-similarity map between two frames: the standard 11x11 Gaussian
/// window (sigma 1.5), C1 = 0.01^2 and C2 = 0.03^2 on the [0,1] range,
/// evaluated on the luma channel. The map covers valid window centres only,
/// so its size is (H-10) x (W-10); map cell (i,j) belongs to pixel (i+5, j+5).
inline Tensor ssim_map(const Frame& a, const Frame& b) {
  require(a.pixels.same_shape(b.pixels), "ssim: frame shapes differ: " +
                                             Tensor::shape_str(a.pixels.shape()) + " vs " +
                                             Tensor::shape_str(b.pixels.shape()));
  const std::int64_t h = a.height(), w = a.width();
  require(h >= 11 && w >= 11, "ssim: frame smaller than the 11x11 window");
  const Tensor la = luma(a), lb = luma(b);
  const auto& wgt = detail::ssim_window();
  constexpr double kC1 = 0.01 * 0.01, kC2 = 0.03 * 0.03;
  Tensor map({h - 10, w - 10});
  for (std::int64_t cy = 5; cy < h - 5; ++cy)
    for (std::int64_t cx = 5; cx < w - 5; ++cx) {
      double mu_a = 0.0, mu_b = 0.0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double g = wgt[static_cast<std::size_t>(i * 11 + j)];
          mu_a += g * la.at2(cy + i - 5, cx + j - 5);
          mu_b += g * lb.at2(cy + i - 5, cx + j - 5);
        }
      double var_a = 0.0, var_b = 0.0, cov = 0.0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double g = wgt[static_cast<std::size_t>(i * 11 + j)];
          const double da = la.at2(cy + i - 5, cx + j - 5) - mu_a;
          const double db = lb.at2(cy + i - 5, cx + j - 5) - mu_b;
          var_a += g * da * da;
          var_b += g * db * db;
          cov += g * da * db;
        }
      map.at2(cy - 5, cx - 5) = ((2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2)) /
                                ((mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2));
    }
  return map;
}

/// Mean SSIM. With a region, only map cells whose window centre pixel lies in
/// the region are averaged (error if the region covers no valid centre).
/// ssim(a, a) is exactly 1.0.
inline double ssim(const Frame& a, const Frame& b, const RegionSpec* region = nullptr) {
  const Tensor map = ssim_map(a, b);
  if (!region) return map.sum() / static_cast<double>(map.numel());
  require(region->height() == a.height() && region->width() == a.width(),
          "ssim: region built for a different frame size");
  double acc = 0.0;
  std::int64_t n = 0;
  for (std::int64_t i = 0; i < map.dim(0); ++i)
    for (std::int64_t j = 0; j < map.dim(1); ++j)
      if (region->contains(j + 5, i + 5)) {
        acc += map.at2(i, j);
        ++n;
      }
  require(n > 0, "ssim: region covers no valid window centres");
  return acc / static_cast<double>(n);
}

}  // namespace tsdr
