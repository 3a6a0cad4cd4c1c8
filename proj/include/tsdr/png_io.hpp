#pragma once

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "tsdr/image.hpp"

namespace tsdr {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] inline void png_error_to_exception(png_structp, png_const_charp msg) {
  throw Error(std::string("png: ") + (msg ? msg : "unknown error"));
}

inline void png_warning_ignore(png_structp, png_const_charp) {}

}  // namespace detail

/// Read just the header of a PNG and return (height, width). Lets dataset
/// validation check annotation bounds without decoding pixels.
inline std::pair<std::int64_t, std::int64_t> read_png_size(const std::string& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw Error("cannot open image file: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           detail::png_error_to_exception,
                                           detail::png_warning_ignore);
  require(png != nullptr, "png: allocation failure");
  png_infop info = png_create_info_struct(png);
  try {
    require(info != nullptr, "png: allocation failure");
    png_init_io(png, fp.get());
    png_read_info(png, info);
    const std::int64_t h = png_get_image_height(png, info);
    const std::int64_t w = png_get_image_width(png, info);
    png_destroy_read_struct(&png, &info, nullptr);
    return {h, w};
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
}

/// Load an 8-bit PNG as a Frame; pixel values are mapped to [0,1] by dividing
/// by 255. Grayscale/palette/alpha inputs are expanded to plain RGB.
inline Frame read_png(const std::string& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw Error("cannot open image file: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           detail::png_error_to_exception,
                                           detail::png_warning_ignore);
  require(png != nullptr, "png: allocation failure");
  png_infop info = png_create_info_struct(png);
  try {
    require(info != nullptr, "png: allocation failure");
    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_set_expand(png);            // palette/low-bit-depth -> 8-bit
    png_set_strip_16(png);          // 16-bit -> 8-bit
    png_set_strip_alpha(png);       // drop alpha
    png_set_gray_to_rgb(png);       // gray -> RGB
    png_read_update_info(png, info);

    const std::int64_t h = png_get_image_height(png, info);
    const std::int64_t w = png_get_image_width(png, info);
    require(png_get_channels(png, info) == 3, "png: expected 3 channels after expansion: " + path);

    std::vector<png_byte> row(static_cast<std::size_t>(w) * 3);
    Frame out(h, w);
    for (std::int64_t y = 0; y < h; ++y) {
      png_read_row(png, row.data(), nullptr);
      for (std::int64_t x = 0; x < w; ++x)
        for (std::int64_t c = 0; c < 3; ++c)
          out.set(y, x, c, static_cast<double>(row[static_cast<std::size_t>(x) * 3 +
                                                   static_cast<std::size_t>(c)]) /
                               255.0);
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
}

/// Write a frame as an 8-bit RGB PNG ([0,1] -> round(v*255)). Compression
/// settings are pinned so identical pixels produce identical files.
inline void write_png(const std::string& path, const Frame& frame) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw Error("cannot open image file for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            detail::png_error_to_exception,
                                            detail::png_warning_ignore);
  require(png != nullptr, "png: allocation failure");
  png_infop info = png_create_info_struct(png);
  try {
    require(info != nullptr, "png: allocation failure");
    png_init_io(png, fp.get());
    const auto h = frame.height(), w = frame.width();
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_set_filter(png, 0, PNG_FILTER_NONE);
    png_write_info(png, info);

    std::vector<png_byte> row(static_cast<std::size_t>(w) * 3);
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x)
        for (std::int64_t c = 0; c < 3; ++c) {
          const double v = clamp01(frame.at(y, x, c));
          row[static_cast<std::size_t>(x) * 3 + static_cast<std::size_t>(c)] =
              static_cast<png_byte>(std::lround(v * 255.0));
        }
      png_write_row(png, row.data());
    }
    png_write_end(png, info);
    png_destroy_write_struct(&png, &info);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
}

/// Write a single-channel [0,1] map as an 8-bit grayscale-as-RGB PNG.
/// Used for `--dump-masks` debugging output.
inline void write_png_gray(const std::string& path, const Tensor& map2d) {
  require(map2d.ndim() == 2, "write_png_gray: expected {H,W} tensor");
  Frame f(map2d.dim(0), map2d.dim(1));
  for (std::int64_t y = 0; y < map2d.dim(0); ++y)
    for (std::int64_t x = 0; x < map2d.dim(1); ++x)
      for (std::int64_t c = 0; c < 3; ++c) f.set(y, x, c, clamp01(map2d.at2(y, x)));
  write_png(path, f);
}

}  // namespace tsdr
