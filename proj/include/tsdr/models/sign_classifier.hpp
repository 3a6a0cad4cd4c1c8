#pragma once

#include <string>
#include <vector>

#include "tsdr/image.hpp"
#include "tsdr/models/detector.hpp"
#include "tsdr/nn/common_layers.hpp"
#include "tsdr/nn/conv.hpp"

namespace tsdr {

/// Configuration of the sign-crop classifier.
struct SignClassifierConfig {
  int num_classes = 14;
  std::int64_t input_size = 32;
  std::uint64_t seed = 0;

  void validate() const {
    require(num_classes >= 2, "sign classifier config: need at least two classes");
    require(input_size >= 16 && input_size % 16 == 0,
            "sign classifier config: input_size must be a positive multiple of 16");
  }
};

/// Small convolutional classifier for detected sign crops: four conv/ReLU/pool
/// blocks (3->8->16->32->64 channels), global average pooling, and a linear
/// head. The first two blocks double as the feature extractor behind the
/// feature-space restoration loss (stride 4, 16 channels).
class SignClassifier {
 public:
  explicit SignClassifier(const SignClassifierConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng = Rng::derive(cfg_.seed, "sign_classifier");
    const std::int64_t widths[4] = {8, 16, 32, 64};
    std::int64_t in_ch = 3;
    for (int b = 0; b < 4; ++b) {
      const std::string name = "block" + std::to_string(b + 1) + ".conv";
      nn::Sequential& dst = b < 2 ? stem_ : tail_;
      dst.emplace<nn::Conv2d>(in_ch, widths[b], 3, 1, 1, nn::PadMode::kZero, rng, name);
      dst.emplace<nn::ReLU>();
      dst.emplace<nn::MaxPool2d>();
      in_ch = widths[b];
    }
    tail_.emplace<nn::GlobalAvgPool>();
    tail_.emplace<nn::Linear>(in_ch, cfg_.num_classes, rng, "head");
  }

  /// Logits for a {N,3,S,S} batch at the configured crop size.
  Tensor forward(const Tensor& x, bool train) {
    require(x.ndim() == 4 && x.dim(1) == 3 && x.dim(2) == cfg_.input_size &&
                x.dim(3) == cfg_.input_size,
            "sign classifier: expected {N,3," + std::to_string(cfg_.input_size) + "," +
                std::to_string(cfg_.input_size) + "}, got " + Tensor::shape_str(x.shape()));
    return tail_.forward(stem_.forward(x, train), train);
  }

  Tensor backward(const Tensor& dlogits) { return stem_.backward(tail_.backward(dlogits)); }

  /// First two blocks only: {N,3,H,W} -> {N,16,H/4,W/4}. Works at any size
  /// divisible by 4, which is what lets whole enhancement patches pass
  /// through. Forward with train=true to enable features_backward().
  Tensor features(const Tensor& x, bool train) {
    require(x.ndim() == 4 && x.dim(1) == 3, "sign classifier features: expected {N,3,H,W}");
    require(x.dim(2) % 4 == 0 && x.dim(3) % 4 == 0,
            "sign classifier features: H and W must be divisible by 4");
    return stem_.forward(x, train);
  }

  /// Gradient of features() w.r.t. its input.
  Tensor features_backward(const Tensor& dfeat) { return stem_.backward(dfeat); }

  std::int64_t feature_stride() const { return 4; }
  std::int64_t feature_channels() const { return 16; }

  /// Crop a box out of a frame (clipped to bounds) and resize it to the
  /// classifier input: the shared transform between training crops and
  /// inference-time detections.
  Tensor preprocess_box(const Frame& frame, std::int64_t x, std::int64_t y, std::int64_t w,
                        std::int64_t h) const {
    const std::int64_t x0 = std::max<std::int64_t>(x, 0);
    const std::int64_t y0 = std::max<std::int64_t>(y, 0);
    const std::int64_t x1 = std::min(x + w, frame.width());
    const std::int64_t y1 = std::min(y + h, frame.height());
    require(x1 > x0 && y1 > y0, "sign classifier: box outside frame");
    const Tensor crop = crop_chw(frame.pixels, x0, y0, x1 - x0, y1 - y0);
    return bilinear_resize_chw(crop, cfg_.input_size, cfg_.input_size);
  }

  /// Crop a detection box out of a frame (clipped to bounds), resize to the
  /// classifier input, and return the argmax class. Ties break toward the
  /// lowest class index.
  int classify_crop(const Frame& frame, const Detection& det, double* confidence = nullptr) {
    const Tensor scaled = preprocess_box(frame, det.x, det.y, det.w, det.h);
    const Tensor logits =
        forward(scaled.reshaped({1, 3, cfg_.input_size, cfg_.input_size}), /*train=*/false);
    const Tensor p = nn::softmax_rows(logits);
    int best = 0;
    for (int j = 1; j < cfg_.num_classes; ++j)
      if (p.at2(0, j) > p.at2(0, best)) best = j;
    if (confidence) *confidence = p.at2(0, best);
    return best;
  }

  std::vector<nn::Param*> params() {
    std::vector<nn::Param*> out;
    stem_.collect_params(out);
    tail_.collect_params(out);
    return out;
  }

  std::vector<nn::Param*> buffers() { return {}; }

  const SignClassifierConfig& config() const { return cfg_; }

 private:
  SignClassifierConfig cfg_;
  nn::Sequential stem_;  // blocks 1-2, shared with the feature extractor
  nn::Sequential tail_;  // blocks 3-4 and head
};

}  // namespace tsdr
