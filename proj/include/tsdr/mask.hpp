#pragma once

#include <vector>

#include "tsdr/types.hpp"

namespace tsdr {

/// Rasterize sign boxes to a binary {0,1} mask of shape {H,W}. A pixel is 1
/// iff it lies inside at least one box (union semantics, so duplicated
/// annotations are idempotent).
inline Tensor rasterize_mask(const std::vector<SignAnnotation>& signs, std::int64_t height,
                             std::int64_t width) {
  require(height >= 1 && width >= 1, "rasterize_mask: empty target");
  Tensor mask({height, width});
  for (const auto& s : signs) {
    s.validate(height, width);
    for (std::int64_t y = s.y; y < s.y + s.h; ++y)
      for (std::int64_t x = s.x; x < s.x + s.w; ++x) mask.at2(y, x) = 1.0;
  }
  return mask;
}

}  // namespace tsdr
