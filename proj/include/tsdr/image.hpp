#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

#include "tsdr/tensor.hpp"

namespace tsdr {

/// An RGB image with pixel values in [0,1] plus identity metadata.
/// Pixels are stored planar (CHW, shape {3,H,W}); use at()/set() rather than
/// assuming a layout. Height and width must be >= 16 and divisible by 4 so
/// every network in the pipeline can consume the frame directly.
struct Frame {
  Tensor pixels;  // {3, H, W}
  std::string video_id;
  std::int64_t frame_idx = 0;

  Frame() = default;
  Frame(std::int64_t height, std::int64_t width, std::string vid = "", std::int64_t idx = 0)
      : pixels(Tensor::zeros({3, height, width})), video_id(std::move(vid)), frame_idx(idx) {}

  std::int64_t height() const { return pixels.dim(1); }
  std::int64_t width() const { return pixels.dim(2); }

  double at(std::int64_t y, std::int64_t x, std::int64_t c) const { return pixels.at3(c, y, x); }
  void set(std::int64_t y, std::int64_t x, std::int64_t c, double v) { pixels.at3(c, y, x) = v; }

  void validate() const {
    require(pixels.ndim() == 3 && pixels.dim(0) == 3, "frame: pixels must be {3,H,W}");
    require(height() >= 16 && width() >= 16, "frame: height and width must be >= 16");
    require(height() % 4 == 0 && width() % 4 == 0,
            "frame: height and width must be divisible by 4");
    for (std::int64_t i = 0; i < pixels.numel(); ++i)
      require(pixels[i] >= 0.0 && pixels[i] <= 1.0, "frame: pixel value outside [0,1]");
  }
};

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

/// Rec.601 luma, used wherever a single-channel view of a frame is needed.
inline Tensor luma(const Frame& f) {
  Tensor out({f.height(), f.width()});
  for (std::int64_t y = 0; y < f.height(); ++y)
    for (std::int64_t x = 0; x < f.width(); ++x)
      out.at2(y, x) = 0.299 * f.at(y, x, 0) + 0.587 * f.at(y, x, 1) + 0.114 * f.at(y, x, 2);
  return out;
}

/// Bilinear resample of a CHW tensor to (out_h, out_w). Sample positions use
/// the half-pixel-center convention; border samples clamp.
inline Tensor bilinear_resize_chw(const Tensor& src, std::int64_t out_h, std::int64_t out_w) {
  require(src.ndim() == 3, "bilinear_resize: expected CHW tensor");
  const std::int64_t c_n = src.dim(0), in_h = src.dim(1), in_w = src.dim(2);
  require(in_h >= 1 && in_w >= 1 && out_h >= 1 && out_w >= 1, "bilinear_resize: empty image");
  Tensor out({c_n, out_h, out_w});
  const double sy = static_cast<double>(in_h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(in_w) / static_cast<double>(out_w);
  for (std::int64_t y = 0; y < out_h; ++y) {
    double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
    fy = std::min(std::max(fy, 0.0), static_cast<double>(in_h - 1));
    const auto y0 = static_cast<std::int64_t>(std::floor(fy));
    const std::int64_t y1 = std::min(y0 + 1, in_h - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::int64_t x = 0; x < out_w; ++x) {
      double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
      fx = std::min(std::max(fx, 0.0), static_cast<double>(in_w - 1));
      const auto x0 = static_cast<std::int64_t>(std::floor(fx));
      const std::int64_t x1 = std::min(x0 + 1, in_w - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::int64_t c = 0; c < c_n; ++c) {
        const double top = src.at3(c, y0, x0) * (1.0 - wx) + src.at3(c, y0, x1) * wx;
        const double bot = src.at3(c, y1, x0) * (1.0 - wx) + src.at3(c, y1, x1) * wx;
        out.at3(c, y, x) = top * (1.0 - wy) + bot * wy;
      }
    }
  }
  return out;
}

/// Copy the axis-aligned window [x, x+w) x [y, y+h) out of a CHW tensor.
/// The window must lie fully inside the image.
inline Tensor crop_chw(const Tensor& src, std::int64_t x, std::int64_t y, std::int64_t w,
                       std::int64_t h) {
  require(src.ndim() == 3, "crop: expected CHW tensor");
  require(w >= 1 && h >= 1 && x >= 0 && y >= 0 && x + w <= src.dim(2) && y + h <= src.dim(1),
          "crop: window outside image bounds");
  Tensor out({src.dim(0), h, w});
  for (std::int64_t c = 0; c < src.dim(0); ++c)
    for (std::int64_t yy = 0; yy < h; ++yy)
      for (std::int64_t xx = 0; xx < w; ++xx) out.at3(c, yy, xx) = src.at3(c, y + yy, x + xx);
  return out;
}

inline Frame resize_frame(const Frame& f, std::int64_t out_h, std::int64_t out_w) {
  Frame out;
  out.pixels = bilinear_resize_chw(f.pixels, out_h, out_w);
  out.video_id = f.video_id;
  out.frame_idx = f.frame_idx;
  return out;
}

}  // namespace tsdr
