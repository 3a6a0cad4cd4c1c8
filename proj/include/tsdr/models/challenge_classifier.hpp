#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "tsdr/image.hpp"
#include "tsdr/nn/common_layers.hpp"
#include "tsdr/nn/conv.hpp"
#include "tsdr/nn/norm.hpp"
#include "tsdr/types.hpp"

namespace tsdr {

/// Configuration of the 6-way challenge-type classifier.
///
/// width_scale shrinks every convolution stage (minimum one channel per
/// stage), which is how desk-scale experiments keep the VGG-style layout
/// affordable. input_size may be as small as 16: pooling stages saturate at
/// 1x1 instead of underflowing.
struct ClassifierConfig {
  std::int64_t input_size = 512;
  double width_scale = 1.0;
  int num_classes = kNumChallengeKinds;
  std::uint64_t seed = 0;

  void validate() const {
    require(input_size >= 16 && input_size % 4 == 0,
            "classifier config: input_size must be >= 16 and divisible by 4");
    require(width_scale > 0.0 && width_scale <= 4.0,
            "classifier config: width_scale must lie in (0,4]");
    require(num_classes >= 2, "classifier config: need at least two classes");
  }
};

struct ChallengePrediction {
  ChallengeKind kind = ChallengeKind::kNone;
  std::array<double, kNumChallengeKinds> probs{};
};

/// VGG-16 style convolutional classifier: five stages of 3x3 convolutions
/// (2,2,3,3,3 per stage) with batch norm and ReLU, each stage followed by 2x2
/// max pooling, then global average pooling and a linear head.
class ChallengeClassifier {
 public:
  explicit ChallengeClassifier(const ClassifierConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng = Rng::derive(cfg_.seed, "challenge_classifier");
    const std::array<int, 5> convs_per_stage{2, 2, 3, 3, 3};
    const std::array<std::int64_t, 5> base_widths{64, 128, 256, 512, 512};
    std::int64_t in_ch = 3;
    for (int s = 0; s < 5; ++s) {
      const std::int64_t out_ch =
          std::max<std::int64_t>(1, std::llround(cfg_.width_scale *
                                                 static_cast<double>(base_widths[s])));
      for (int c = 0; c < convs_per_stage[s]; ++c) {
        const std::string name =
            "stage" + std::to_string(s + 1) + ".conv" + std::to_string(c + 1);
        net_.emplace<nn::Conv2d>(in_ch, out_ch, 3, 1, 1, nn::PadMode::kZero, rng, name);
        net_.emplace<nn::BatchNorm2d>(out_ch, name + ".bn");
        net_.emplace<nn::ReLU>();
        in_ch = out_ch;
      }
      net_.emplace<nn::MaxPool2d>();
    }
    net_.emplace<nn::GlobalAvgPool>();
    net_.emplace<nn::Linear>(in_ch, cfg_.num_classes, rng, "head");
  }

  /// Logits for a {N,3,S,S} batch already at the configured input size.
  Tensor forward(const Tensor& x, bool train) {
    require(x.ndim() == 4 && x.dim(1) == 3 && x.dim(2) == cfg_.input_size &&
                x.dim(3) == cfg_.input_size,
            "challenge classifier: expected {N,3," + std::to_string(cfg_.input_size) + "," +
                std::to_string(cfg_.input_size) + "}, got " + Tensor::shape_str(x.shape()));
    return net_.forward(x, train);
  }

  Tensor backward(const Tensor& dlogits) { return net_.backward(dlogits); }

  /// Resize a frame to the classifier input and stack it as a batch of one.
  Tensor preprocess(const Frame& f) const {
    const Tensor r = bilinear_resize_chw(f.pixels, cfg_.input_size, cfg_.input_size);
    return r.reshaped({1, 3, cfg_.input_size, cfg_.input_size});
  }

  /// Predict the challenge kind of a frame. Ties break toward the lowest
  /// class index, so repeated runs agree.
  ChallengePrediction classify(const Frame& f) {
    f.validate();
    const Tensor logits = forward(preprocess(f), /*train=*/false);
    const Tensor p = nn::softmax_rows(logits);
    ChallengePrediction out;
    require(cfg_.num_classes == kNumChallengeKinds,
            "challenge classifier: classify() needs the standard six classes");
    int best = 0;
    for (int j = 1; j < cfg_.num_classes; ++j)
      if (p.at2(0, j) > p.at2(0, best)) best = j;
    for (int j = 0; j < cfg_.num_classes; ++j)
      out.probs[static_cast<std::size_t>(j)] = p.at2(0, j);
    out.kind = static_cast<ChallengeKind>(best);
    return out;
  }

  std::vector<nn::Param*> params() {
    std::vector<nn::Param*> out;
    net_.collect_params(out);
    return out;
  }

  std::vector<nn::Param*> buffers() {
    std::vector<nn::Param*> out;
    net_.collect_buffers(out);
    return out;
  }

  const ClassifierConfig& config() const { return cfg_; }

 private:
  ClassifierConfig cfg_;
  nn::Sequential net_;
};

}  // namespace tsdr
