#pragma once

#include <string>
#include <vector>

#include "tsdr/image.hpp"
#include "tsdr/nn/common_layers.hpp"
#include "tsdr/nn/conv.hpp"
#include "tsdr/nn/norm.hpp"

namespace tsdr {

/// Configuration of one per-challenge enhancement network.
struct EnhancerConfig {
  std::int64_t base_channels = 64;
  int num_residual_blocks = 9;
  std::uint64_t seed = 0;

  void validate() const {
    require(base_channels >= 1, "enhancer config: base_channels must be >= 1");
    require(num_residual_blocks >= 0, "enhancer config: num_residual_blocks must be >= 0");
  }
};

namespace nn {

/// conv 3x3 -> IN -> ReLU -> conv 3x3 -> IN, plus the identity skip. The
/// interior convolutions use reflection padding like the network's 7x7 ends.
class ResidualBlock : public Layer {
 public:
  ResidualBlock(std::int64_t channels, Rng& rng, const std::string& name)
      : c1_(channels, channels, 3, 1, 1, PadMode::kReflect, rng, name + ".conv1"),
        n1_(channels, name + ".norm1"),
        c2_(channels, channels, 3, 1, 1, PadMode::kReflect, rng, name + ".conv2"),
        n2_(channels, name + ".norm2") {}

  Tensor forward(const Tensor& x, bool train) override {
    Tensor t = c1_.forward(x, train);
    t = n1_.forward(t, train);
    t = relu_.forward(t, train);
    t = c2_.forward(t, train);
    t = n2_.forward(t, train);
    require(t.same_shape(x), "residual block: branch changed shape");
    t += x;
    return t;
  }

  Tensor backward(const Tensor& dy) override {
    Tensor d = n2_.backward(dy);
    d = c2_.backward(d);
    d = relu_.backward(d);
    d = n1_.backward(d);
    d = c1_.backward(d);
    d += dy;  // identity skip
    return d;
  }

  void collect_params(std::vector<Param*>& out) override {
    c1_.collect_params(out);
    n1_.collect_params(out);
    c2_.collect_params(out);
    n2_.collect_params(out);
  }

  std::string kind() const override { return "residual_block"; }

 private:
  Conv2d c1_;
  InstanceNorm2d n1_;
  ReLU relu_;
  Conv2d c2_;
  InstanceNorm2d n2_;
};

}  // namespace nn

/// Image-to-image enhancement network: a 7x7 stem, two stride-2 encoder
/// convolutions, a stack of residual blocks at 1/4 resolution, two transposed
/// convolutions back to full resolution, and a 7x7 head whose tanh output is
/// shifted into [0,1]. Instance normalisation throughout; the 7x7 ends and
/// residual blocks use reflection padding.
class EnhanceNet {
 public:
  explicit EnhanceNet(const EnhancerConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng = Rng::derive(cfg_.seed, "enhancer");
    const std::int64_t c = cfg_.base_channels;
    net_.emplace<nn::Conv2d>(3, c, 7, 1, 3, nn::PadMode::kReflect, rng, "enc1.conv");
    net_.emplace<nn::InstanceNorm2d>(c, "enc1.norm");
    net_.emplace<nn::ReLU>();
    net_.emplace<nn::Conv2d>(c, 2 * c, 3, 2, 1, nn::PadMode::kZero, rng, "enc2.conv");
    net_.emplace<nn::InstanceNorm2d>(2 * c, "enc2.norm");
    net_.emplace<nn::ReLU>();
    net_.emplace<nn::Conv2d>(2 * c, 4 * c, 3, 2, 1, nn::PadMode::kZero, rng, "enc3.conv");
    net_.emplace<nn::InstanceNorm2d>(4 * c, "enc3.norm");
    net_.emplace<nn::ReLU>();
    for (int b = 0; b < cfg_.num_residual_blocks; ++b)
      net_.emplace<nn::ResidualBlock>(4 * c, rng, "res" + std::to_string(b + 1));
    net_.emplace<nn::ConvTranspose2d>(4 * c, 2 * c, 3, 2, 1, 1, rng, "dec1.conv");
    net_.emplace<nn::InstanceNorm2d>(2 * c, "dec1.norm");
    net_.emplace<nn::ReLU>();
    net_.emplace<nn::ConvTranspose2d>(2 * c, c, 3, 2, 1, 1, rng, "dec2.conv");
    net_.emplace<nn::InstanceNorm2d>(c, "dec2.norm");
    net_.emplace<nn::ReLU>();
    net_.emplace<nn::Conv2d>(c, 3, 7, 1, 3, nn::PadMode::kReflect, rng, "head.conv");
    net_.emplace<nn::Tanh>();
    net_.emplace<nn::ShiftScale>();
  }

  /// {N,3,H,W} -> {N,3,H,W} with values in [0,1]. H and W must be divisible
  /// by 4 so the two downsampling steps invert exactly.
  Tensor forward(const Tensor& x, bool train) {
    require(x.ndim() == 4 && x.dim(1) == 3, "enhancer: expected {N,3,H,W}");
    require(x.dim(2) % 4 == 0 && x.dim(3) % 4 == 0 && x.dim(2) >= 16 && x.dim(3) >= 16,
            "enhancer: H and W must be >= 16 and divisible by 4");
    return net_.forward(x, train);
  }

  Tensor backward(const Tensor& dy) { return net_.backward(dy); }

  Frame enhance(const Frame& f) {
    f.validate();
    const Tensor y =
        forward(f.pixels.reshaped({1, 3, f.height(), f.width()}), /*train=*/false);
    Frame out;
    out.pixels = y.reshaped({3, f.height(), f.width()});
    out.video_id = f.video_id;
    out.frame_idx = f.frame_idx;
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

  const EnhancerConfig& config() const { return cfg_; }

 private:
  EnhancerConfig cfg_;
  nn::Sequential net_;
};

}  // namespace tsdr
