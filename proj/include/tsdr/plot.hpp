#pragma once

// Minimal dependency-free line charts rendered straight into PNG files:
// white canvas, boxed plot area, light gridlines, one colored polyline with
// point markers per series, numeric tick labels and a swatch legend drawn
// with a built-in 3x5 pixel font. Intended for degradation curves and
// training histories, not publication graphics.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "tsdr/png_io.hpp"

namespace tsdr {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

namespace detail {

struct Rgb {
  double r, g, b;
};

inline const std::array<Rgb, 8>& plot_palette() {
  static const std::array<Rgb, 8> p = {{{0.84, 0.11, 0.11},
                                        {0.12, 0.36, 0.80},
                                        {0.10, 0.62, 0.22},
                                        {0.86, 0.55, 0.05},
                                        {0.55, 0.15, 0.65},
                                        {0.05, 0.60, 0.60},
                                        {0.47, 0.31, 0.10},
                                        {0.35, 0.35, 0.35}}};
  return p;
}

/// 3x5 glyphs, 3 bits per row from the top, left bit = leftmost column.
inline std::uint16_t glyph_for(char c) {
  auto g = [](unsigned r0, unsigned r1, unsigned r2, unsigned r3, unsigned r4) {
    return static_cast<std::uint16_t>(r0 << 12 | r1 << 9 | r2 << 6 | r3 << 3 | r4);
  };
  if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  switch (c) {
    case '0': return g(0b111, 0b101, 0b101, 0b101, 0b111);
    case '1': return g(0b010, 0b110, 0b010, 0b010, 0b111);
    case '2': return g(0b111, 0b001, 0b111, 0b100, 0b111);
    case '3': return g(0b111, 0b001, 0b111, 0b001, 0b111);
    case '4': return g(0b101, 0b101, 0b111, 0b001, 0b001);
    case '5': return g(0b111, 0b100, 0b111, 0b001, 0b111);
    case '6': return g(0b111, 0b100, 0b111, 0b101, 0b111);
    case '7': return g(0b111, 0b001, 0b001, 0b010, 0b010);
    case '8': return g(0b111, 0b101, 0b111, 0b101, 0b111);
    case '9': return g(0b111, 0b101, 0b111, 0b001, 0b111);
    case '.': return g(0b000, 0b000, 0b000, 0b000, 0b010);
    case ',': return g(0b000, 0b000, 0b000, 0b010, 0b100);
    case '-': return g(0b000, 0b000, 0b111, 0b000, 0b000);
    case '+': return g(0b000, 0b010, 0b111, 0b010, 0b000);
    case '_': return g(0b000, 0b000, 0b000, 0b000, 0b111);
    case '/': return g(0b001, 0b001, 0b010, 0b100, 0b100);
    case ':': return g(0b000, 0b010, 0b000, 0b010, 0b000);
    case '(': return g(0b001, 0b010, 0b010, 0b010, 0b001);
    case ')': return g(0b100, 0b010, 0b010, 0b010, 0b100);
    case 'a': return g(0b111, 0b101, 0b111, 0b101, 0b101);
    case 'b': return g(0b110, 0b101, 0b110, 0b101, 0b110);
    case 'c': return g(0b111, 0b100, 0b100, 0b100, 0b111);
    case 'd': return g(0b110, 0b101, 0b101, 0b101, 0b110);
    case 'e': return g(0b111, 0b100, 0b111, 0b100, 0b111);
    case 'f': return g(0b111, 0b100, 0b111, 0b100, 0b100);
    case 'g': return g(0b111, 0b100, 0b101, 0b101, 0b111);
    case 'h': return g(0b101, 0b101, 0b111, 0b101, 0b101);
    case 'i': return g(0b111, 0b010, 0b010, 0b010, 0b111);
    case 'j': return g(0b001, 0b001, 0b001, 0b101, 0b111);
    case 'k': return g(0b101, 0b110, 0b100, 0b110, 0b101);
    case 'l': return g(0b100, 0b100, 0b100, 0b100, 0b111);
    case 'm': return g(0b101, 0b111, 0b111, 0b101, 0b101);
    case 'n': return g(0b101, 0b111, 0b111, 0b111, 0b101);
    case 'o': return g(0b111, 0b101, 0b101, 0b101, 0b111);
    case 'p': return g(0b111, 0b101, 0b111, 0b100, 0b100);
    case 'q': return g(0b111, 0b101, 0b101, 0b111, 0b001);
    case 'r': return g(0b111, 0b101, 0b110, 0b101, 0b101);
    case 's': return g(0b111, 0b100, 0b111, 0b001, 0b111);
    case 't': return g(0b111, 0b010, 0b010, 0b010, 0b010);
    case 'u': return g(0b101, 0b101, 0b101, 0b101, 0b111);
    case 'v': return g(0b101, 0b101, 0b101, 0b101, 0b010);
    case 'w': return g(0b101, 0b101, 0b111, 0b111, 0b101);
    case 'x': return g(0b101, 0b101, 0b010, 0b101, 0b101);
    case 'y': return g(0b101, 0b101, 0b010, 0b010, 0b010);
    case 'z': return g(0b111, 0b001, 0b010, 0b100, 0b111);
    default: return 0;  // space and anything unknown
  }
}

inline void plot_px(Frame& img, std::int64_t x, std::int64_t y, const Rgb& c) {
  if (x < 0 || y < 0 || x >= img.width() || y >= img.height()) return;
  img.set(y, x, 0, c.r);
  img.set(y, x, 1, c.g);
  img.set(y, x, 2, c.b);
}

inline void plot_rect(Frame& img, std::int64_t x, std::int64_t y, std::int64_t w, std::int64_t h,
                      const Rgb& c) {
  for (std::int64_t j = y; j < y + h; ++j)
    for (std::int64_t i = x; i < x + w; ++i) plot_px(img, i, j, c);
}

inline void plot_line(Frame& img, std::int64_t x0, std::int64_t y0, std::int64_t x1,
                      std::int64_t y1, const Rgb& c) {
  const std::int64_t dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const std::int64_t sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  std::int64_t err = dx + dy;
  for (;;) {
    plot_px(img, x0, y0, c);
    if (x0 == x1 && y0 == y1) break;
    const std::int64_t e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

inline void plot_text(Frame& img, std::int64_t x, std::int64_t y, const std::string& text,
                      const Rgb& c, int scale = 1) {
  std::int64_t cx = x;
  for (char ch : text) {
    const std::uint16_t bits = glyph_for(ch);
    for (int r = 0; r < 5; ++r)
      for (int col = 0; col < 3; ++col)
        if (bits >> (14 - r * 3 - col) & 1)
          plot_rect(img, cx + col * scale, y + r * scale, scale, scale, c);
    cx += 4 * scale;
  }
}

inline std::int64_t text_width(const std::string& text, int scale) {
  return text.empty() ? 0 : static_cast<std::int64_t>(text.size()) * 4 * scale - scale;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

}  // namespace detail

/// Render a line chart to a PNG file. Chokes on empty input; a series with a
/// single point is drawn as a lone marker. Output bytes are a pure function
/// of the arguments.
inline void write_line_plot(const std::string& path, const std::string& title,
                            const std::vector<PlotSeries>& series, std::int64_t width = 480,
                            std::int64_t height = 360) {
  require(!series.empty(), "write_line_plot: no series given");
  for (const auto& s : series) {
    require(s.x.size() == s.y.size(), "write_line_plot: series '" + s.label + "' x/y length mismatch");
    require(!s.x.empty(), "write_line_plot: series '" + s.label + "' is empty");
  }
  require(width >= 120 && height >= 90, "write_line_plot: canvas too small");

  using detail::Rgb;
  const Rgb black{0.0, 0.0, 0.0}, grid{0.86, 0.86, 0.86};
  Frame img(height, width, "plot", 0);
  img.pixels.fill(1.0);

  double xmin = series[0].x[0], xmax = xmin, ymin = series[0].y[0], ymax = ymin;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  auto widen = [](double& lo, double& hi) {
    if (hi - lo < 1e-300) {
      const double pad = std::max(0.5, std::abs(lo) * 0.1);
      lo -= pad;
      hi += pad;
    } else {
      const double pad = (hi - lo) * 0.04;
      lo -= pad;
      hi += pad;
    }
  };
  widen(xmin, xmax);
  widen(ymin, ymax);

  const std::int64_t ml = 52, mr = 14, mt = 24, mb = 32;
  const std::int64_t px0 = ml, px1 = width - mr, py0 = mt, py1 = height - mb;
  auto to_px = [&](double x) {
    return px0 + static_cast<std::int64_t>(std::llround((x - xmin) / (xmax - xmin) *
                                                        static_cast<double>(px1 - px0)));
  };
  auto to_py = [&](double y) {
    return py1 - static_cast<std::int64_t>(std::llround((y - ymin) / (ymax - ymin) *
                                                        static_cast<double>(py1 - py0)));
  };

  for (int t = 0; t <= 4; ++t) {
    const double fx = xmin + (xmax - xmin) * t / 4.0;
    const double fy = ymin + (ymax - ymin) * t / 4.0;
    const std::int64_t gx = to_px(fx), gy = to_py(fy);
    detail::plot_line(img, gx, py0, gx, py1, grid);
    detail::plot_line(img, px0, gy, px1, gy, grid);
    const std::string lx = detail::tick_label(fx), ly = detail::tick_label(fy);
    detail::plot_text(img, gx - detail::text_width(lx, 1) / 2, py1 + 5, lx, black);
    detail::plot_text(img, px0 - 6 - detail::text_width(ly, 1), gy - 2, ly, black);
  }
  detail::plot_line(img, px0, py0, px1, py0, black);
  detail::plot_line(img, px0, py1, px1, py1, black);
  detail::plot_line(img, px0, py0, px0, py1, black);
  detail::plot_line(img, px1, py0, px1, py1, black);
  detail::plot_text(img, px0, (mt - 5) / 2, title, black, 1);

  const auto& palette = detail::plot_palette();
  for (std::size_t si = 0; si < series.size(); ++si) {
    const Rgb c = palette[si % palette.size()];
    const auto& s = series[si];
    for (std::size_t i = 0; i + 1 < s.x.size(); ++i)
      detail::plot_line(img, to_px(s.x[i]), to_py(s.y[i]), to_px(s.x[i + 1]), to_py(s.y[i + 1]),
                        c);
    for (std::size_t i = 0; i < s.x.size(); ++i)
      detail::plot_rect(img, to_px(s.x[i]) - 1, to_py(s.y[i]) - 1, 3, 3, c);
    const std::int64_t ly = py0 + 5 + static_cast<std::int64_t>(si) * 9;
    detail::plot_rect(img, px0 + 6, ly, 5, 5, c);
    detail::plot_text(img, px0 + 14, ly, s.label, black);
  }

  write_png(path, img);
}

}  // namespace tsdr
