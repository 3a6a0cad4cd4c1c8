#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "tsdr/image.hpp"
#include "tsdr/nn/common_layers.hpp"
#include "tsdr/nn/conv.hpp"

namespace tsdr {

/// Configuration of the segmentation-based sign detector.
struct DetectorConfig {
  std::int64_t base_channels = 16;
  double threshold = 0.5;      // probability cut for the binary mask
  double min_area_ref = 9.0;   // component area floor at the 256-px reference width
  std::uint64_t seed = 0;

  void validate() const {
    require(base_channels >= 1, "detector config: base_channels must be >= 1");
    require(threshold > 0.0 && threshold < 1.0, "detector config: threshold must lie in (0,1)");
    require(min_area_ref >= 0.0, "detector config: min_area_ref must be >= 0");
  }

  /// min_area_ref is defined against a 256x256 frame and scales with frame
  /// area (speck noise covers a fixed image fraction, not a fixed pixel
  /// count), floored at one pixel.
  std::int64_t min_area_for(std::int64_t height, std::int64_t width) const {
    const double scaled = min_area_ref * static_cast<double>(height * width) / (256.0 * 256.0);
    return std::max<std::int64_t>(1, std::llround(scaled));
  }
};

/// One detected sign region. class_id stays -1 until a sign classifier labels
/// the crop.
struct Detection {
  std::int64_t x = 0, y = 0, w = 0, h = 0;
  double score = 0.0;
  int class_id = -1;
};

/// Extract axis-aligned boxes from a {H,W} probability mask: threshold at
/// `threshold` (inclusive), find 4-connected components, drop components with
/// fewer than min_area pixels, and report each survivor's bounding box with
/// the component's mean probability as its score. Output is sorted by score
/// descending, ties broken by top-left corner, so results are reproducible.
inline std::vector<Detection> mask_to_boxes(const Tensor& probs, double threshold,
                                            std::int64_t min_area) {
  require(probs.ndim() == 2, "mask_to_boxes: expected {H,W} mask");
  require(min_area >= 1, "mask_to_boxes: min_area must be >= 1");
  const std::int64_t h = probs.dim(0), w = probs.dim(1);
  std::vector<std::int64_t> label(static_cast<std::size_t>(h * w), -1);
  std::vector<Detection> out;
  std::vector<std::int64_t> stack;
  for (std::int64_t start = 0; start < h * w; ++start) {
    if (label[static_cast<std::size_t>(start)] >= 0 || probs[start] < threshold) continue;
    const auto comp = static_cast<std::int64_t>(out.size());
    std::int64_t min_x = w, max_x = -1, min_y = h, max_y = -1, area = 0;
    double prob_sum = 0.0;
    stack.assign(1, start);
    label[static_cast<std::size_t>(start)] = comp;
    while (!stack.empty()) {
      const std::int64_t cur = stack.back();
      stack.pop_back();
      const std::int64_t cy = cur / w, cx = cur % w;
      min_x = std::min(min_x, cx);
      max_x = std::max(max_x, cx);
      min_y = std::min(min_y, cy);
      max_y = std::max(max_y, cy);
      ++area;
      prob_sum += probs[cur];
      const std::int64_t ny[4] = {cy - 1, cy + 1, cy, cy};
      const std::int64_t nx[4] = {cx, cx, cx - 1, cx + 1};
      for (int k = 0; k < 4; ++k) {
        if (ny[k] < 0 || ny[k] >= h || nx[k] < 0 || nx[k] >= w) continue;
        const std::int64_t ni = ny[k] * w + nx[k];
        if (label[static_cast<std::size_t>(ni)] >= 0 || probs[ni] < threshold) continue;
        label[static_cast<std::size_t>(ni)] = comp;
        stack.push_back(ni);
      }
    }
    if (area < min_area) continue;
    Detection d;
    d.x = min_x;
    d.y = min_y;
    d.w = max_x - min_x + 1;
    d.h = max_y - min_y + 1;
    d.score = prob_sum / static_cast<double>(area);
    out.push_back(d);
  }
  std::sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });
  return out;
}

/// U-Net style segmentation detector with three resolution levels: two
/// double-conv encoder stages with 2x2 pooling, a bottleneck, transposed-conv
/// upsampling with skip concatenation, and a 1x1 sigmoid head producing a
/// per-pixel sign probability.
class SignDetector {
 public:
  explicit SignDetector(const DetectorConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng = Rng::derive(cfg_.seed, "detector");
    const std::int64_t c = cfg_.base_channels;
    build_double(enc0_, 3, c, rng, "enc0");
    build_double(enc1_, c, 2 * c, rng, "enc1");
    build_double(bottleneck_, 2 * c, 4 * c, rng, "bottleneck");
    up1_ = std::make_unique<nn::ConvTranspose2d>(4 * c, 2 * c, 3, 2, 1, 1, rng, "up1");
    build_double(dec1_, 4 * c, 2 * c, rng, "dec1");
    up0_ = std::make_unique<nn::ConvTranspose2d>(2 * c, c, 3, 2, 1, 1, rng, "up0");
    build_double(dec0_, 2 * c, c, rng, "dec0");
    head_ = std::make_unique<nn::Conv2d>(c, 1, 1, 1, 0, nn::PadMode::kZero, rng, "head");
  }

  /// {N,3,H,W} -> {N,1,H,W} per-pixel probabilities. H and W must be
  /// divisible by 4.
  Tensor forward(const Tensor& x, bool train) {
    require(x.ndim() == 4 && x.dim(1) == 3, "detector: expected {N,3,H,W}");
    require(x.dim(2) % 4 == 0 && x.dim(3) % 4 == 0 && x.dim(2) >= 16 && x.dim(3) >= 16,
            "detector: H and W must be >= 16 and divisible by 4");
    Tensor e0 = enc0_.forward(x, train);
    Tensor p0 = pool0_.forward(e0, train);
    Tensor e1 = enc1_.forward(p0, train);
    Tensor p1 = pool1_.forward(e1, train);
    Tensor b = bottleneck_.forward(p1, train);
    Tensor u1 = up1_->forward(b, train);
    Tensor f1 = dec1_.forward(cat_channels(u1, e1), train);
    Tensor u0 = up0_->forward(f1, train);
    Tensor f0 = dec0_.forward(cat_channels(u0, e0), train);
    return sig_.forward(head_->forward(f0, train), train);
  }

  /// Gradient w.r.t. the input frame batch; parameter gradients accumulate as
  /// a side effect (harmless for a frozen detector whose optimiser never
  /// runs, and required when training the detector itself).
  Tensor backward(const Tensor& dy) {
    Tensor d = head_->backward(sig_.backward(dy));
    Tensor dc0 = dec0_.backward(d);
    auto [du0, de0_skip] = split_channels(dc0, cfg_.base_channels);
    Tensor df1 = up0_->backward(du0);
    Tensor dc1 = dec1_.backward(df1);
    auto [du1, de1_skip] = split_channels(dc1, 2 * cfg_.base_channels);
    Tensor db = up1_->backward(du1);
    Tensor dp1 = bottleneck_.backward(db);
    Tensor de1 = pool1_.backward(dp1);
    de1 += de1_skip;
    Tensor dp0 = enc1_.backward(de1);
    Tensor de0 = pool0_.backward(dp0);
    de0 += de0_skip;
    return enc0_.backward(de0);
  }

  /// Per-pixel sign probability map for one frame.
  Tensor segment(const Frame& f) {
    f.validate();
    const Tensor y =
        forward(f.pixels.reshaped({1, 3, f.height(), f.width()}), /*train=*/false);
    return y.reshaped({f.height(), f.width()});
  }

  /// Segment a frame and turn the mask into scored boxes.
  std::vector<Detection> detect(const Frame& f) {
    return mask_to_boxes(segment(f), cfg_.threshold, cfg_.min_area_for(f.height(), f.width()));
  }

  std::vector<nn::Param*> params() {
    std::vector<nn::Param*> out;
    enc0_.collect_params(out);
    enc1_.collect_params(out);
    bottleneck_.collect_params(out);
    up1_->collect_params(out);
    dec1_.collect_params(out);
    up0_->collect_params(out);
    dec0_.collect_params(out);
    head_->collect_params(out);
    return out;
  }

  std::vector<nn::Param*> buffers() { return {}; }

  /// Lock the weights: records a digest that assert_frozen() re-checks. The
  /// inference pipeline treats the detector as immutable once trained.
  void freeze() {
    frozen_checksum_ = nn::params_checksum(params());
    frozen_ = true;
  }

  bool frozen() const { return frozen_; }

  std::uint64_t weights_checksum() { return nn::params_checksum(params()); }

  void assert_frozen() {
    require(frozen_, "detector: freeze() has not been called");
    require(weights_checksum() == frozen_checksum_,
            "detector: frozen weights changed since freeze()");
  }

  const DetectorConfig& config() const { return cfg_; }

 private:
  static void build_double(nn::Sequential& seq, std::int64_t in_ch, std::int64_t out_ch, Rng& rng,
                           const std::string& name) {
    seq.emplace<nn::Conv2d>(in_ch, out_ch, 3, 1, 1, nn::PadMode::kZero, rng, name + ".conv1");
    seq.emplace<nn::ReLU>();
    seq.emplace<nn::Conv2d>(out_ch, out_ch, 3, 1, 1, nn::PadMode::kZero, rng, name + ".conv2");
    seq.emplace<nn::ReLU>();
  }

  static Tensor cat_channels(const Tensor& a, const Tensor& b) {
    require(a.ndim() == 4 && b.ndim() == 4 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) &&
                a.dim(3) == b.dim(3),
            "detector: skip connection shape mismatch");
    const std::int64_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
    Tensor out({n, ca + cb, a.dim(2), a.dim(3)});
    for (std::int64_t s = 0; s < n; ++s) {
      std::copy(a.data() + s * ca * hw, a.data() + (s + 1) * ca * hw,
                out.data() + s * (ca + cb) * hw);
      std::copy(b.data() + s * cb * hw, b.data() + (s + 1) * cb * hw,
                out.data() + (s * (ca + cb) + ca) * hw);
    }
    return out;
  }

  static std::pair<Tensor, Tensor> split_channels(const Tensor& x, std::int64_t ca) {
    const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    const std::int64_t cb = c - ca;
    Tensor a({n, ca, x.dim(2), x.dim(3)}), b({n, cb, x.dim(2), x.dim(3)});
    for (std::int64_t s = 0; s < n; ++s) {
      std::copy(x.data() + s * c * hw, x.data() + s * c * hw + ca * hw, a.data() + s * ca * hw);
      std::copy(x.data() + s * c * hw + ca * hw, x.data() + (s + 1) * c * hw,
                b.data() + s * cb * hw);
    }
    return {std::move(a), std::move(b)};
  }

  DetectorConfig cfg_;
  nn::Sequential enc0_, enc1_, bottleneck_, dec1_, dec0_;
  nn::MaxPool2d pool0_, pool1_;
  std::unique_ptr<nn::ConvTranspose2d> up1_, up0_;
  std::unique_ptr<nn::Conv2d> head_;
  nn::Sigmoid sig_;
  bool frozen_ = false;
  std::uint64_t frozen_checksum_ = 0;
};

}  // namespace tsdr
