#pragma once

// Shared helpers for the test suite: deterministic random frames and masks.

#include "tsdr/image.hpp"
#include "tsdr/rng.hpp"
#include "tsdr/tensor.hpp"

namespace testutil {

using tsdr::Frame;
using tsdr::Rng;
using tsdr::Tensor;

/// Frame with independent uniform [0,1] pixels, deterministic per seed.
inline Frame random_frame(std::int64_t h, std::int64_t w, std::uint64_t seed) {
  Rng rng(seed);
  Frame f(h, w, "test", 0);
  for (std::int64_t i = 0; i < f.pixels.numel(); ++i) f.pixels[i] = rng.uniform();
  return f;
}

/// {H,W} tensor of uniform [0,1] values, deterministic per seed.
inline Tensor random_map(std::int64_t h, std::int64_t w, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t({h, w});
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform();
  return t;
}

/// {H,W} tensor of 0/1 values with roughly the given fill fraction.
inline Tensor random_binary_map(std::int64_t h, std::int64_t w, std::uint64_t seed,
                                double fill = 0.3) {
  Rng rng(seed);
  Tensor t({h, w});
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform() < fill ? 1.0 : 0.0;
  return t;
}

}  // namespace testutil
