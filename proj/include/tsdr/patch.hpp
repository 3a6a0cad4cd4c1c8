#pragma once

#include <algorithm>
#include <vector>

#include "tsdr/rng.hpp"
#include "tsdr/types.hpp"

namespace tsdr {

/// A training patch cut from a challenged frame and, with the identical
/// window, from its clean counterpart. Annotations are window-local.
struct PatchPair {
  Frame challenged;
  Frame clean;
  std::vector<SignAnnotation> signs;
  std::int64_t x0 = 0;  // window origin in the source frame
  std::int64_t y0 = 0;
};

namespace detail {

inline Frame crop_frame(const Frame& f, std::int64_t y0, std::int64_t x0, std::int64_t h,
                        std::int64_t w) {
  Frame out(h, w, f.video_id, f.frame_idx);
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) out.pixels.at3(c, y, x) = f.pixels.at3(c, y0 + y, x0 + x);
  return out;
}

}  // namespace detail

/// Sample a sign-containing patch: pick one sign uniformly at random among the
/// signs that fit the window, then pick the window uniformly among all
/// positions that fully contain that sign. The same window is applied to the
/// challenged frame and the clean reference (for challenge-free records the
/// frame doubles as its own reference). Signs partially covered by the window
/// are clipped to it; the anchor sign is always complete.
///
/// patch_size is rounded up to a multiple of 4 and clamped to the frame, so a
/// frame no larger than the patch is returned whole. Deterministic per seed.
inline PatchPair crop_sign_patch(const AnnotatedFrame& record, std::int64_t patch_size,
                                 std::uint64_t rng_seed) {
  require(!record.signs.empty(),
          "crop_sign_patch: record contains no signs (filter sign-free frames before cropping)");
  require(patch_size >= 1, "crop_sign_patch: patch_size must be >= 1");

  const std::int64_t fh = record.frame.height(), fw = record.frame.width();
  std::int64_t ps = ((patch_size + 3) / 4) * 4;
  const std::int64_t ph = std::min(ps, fh);
  const std::int64_t pw = std::min(ps, fw);

  std::vector<std::size_t> fitting;
  for (std::size_t i = 0; i < record.signs.size(); ++i)
    if (record.signs[i].w <= pw && record.signs[i].h <= ph) fitting.push_back(i);
  require(!fitting.empty(), "crop_sign_patch: no sign fits a " + std::to_string(pw) + "x" +
                                std::to_string(ph) + " window");

  Rng rng = Rng::derive(rng_seed, "crop");
  const SignAnnotation& anchor =
      record.signs[fitting[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(fitting.size()) - 1))]];

  const std::int64_t x_lo = std::max<std::int64_t>(0, anchor.x + anchor.w - pw);
  const std::int64_t x_hi = std::min(fw - pw, anchor.x);
  const std::int64_t y_lo = std::max<std::int64_t>(0, anchor.y + anchor.h - ph);
  const std::int64_t y_hi = std::min(fh - ph, anchor.y);
  const std::int64_t x0 = rng.uniform_int(x_lo, x_hi);
  const std::int64_t y0 = rng.uniform_int(y_lo, y_hi);

  PatchPair out;
  out.x0 = x0;
  out.y0 = y0;
  out.challenged = detail::crop_frame(record.frame, y0, x0, ph, pw);
  out.clean = detail::crop_frame(record.clean_ref ? *record.clean_ref : record.frame, y0, x0, ph, pw);
  for (const auto& s : record.signs) {
    const std::int64_t cx0 = std::max(s.x, x0), cy0 = std::max(s.y, y0);
    const std::int64_t cx1 = std::min(s.x + s.w, x0 + pw), cy1 = std::min(s.y + s.h, y0 + ph);
    if (cx1 - cx0 >= 1 && cy1 - cy0 >= 1)
      out.signs.push_back({cx0 - x0, cy0 - y0, cx1 - cx0, cy1 - cy0, s.class_id});
  }
  return out;
}

}  // namespace tsdr
