#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tsdr/image.hpp"
#include "tsdr/models/sign_classifier.hpp"
#include "tsdr/types.hpp"

namespace tsdr {

/// The sign-region set of a frame: a union of annotation boxes together with
/// the derived per-pixel membership mask. Pixels are counted once however
/// many boxes cover them.
class RegionSpec {
 public:
  RegionSpec(std::vector<SignAnnotation> boxes, std::int64_t height, std::int64_t width)
      : boxes_(std::move(boxes)), height_(height), width_(width) {
    require(height >= 1 && width >= 1, "region spec: empty frame");
    mask_.assign(static_cast<std::size_t>(height * width), 0);
    for (const auto& b : boxes_) {
      b.validate(height, width);
      for (std::int64_t y = b.y; y < b.y + b.h; ++y)
        for (std::int64_t x = b.x; x < b.x + b.w; ++x)
          mask_[static_cast<std::size_t>(y * width + x)] = 1;
    }
    count_ = 0;
    for (const auto m : mask_) count_ += m;
  }

  /// Region covering every pixel, used by whole-image loss variants.
  static RegionSpec full_frame(std::int64_t height, std::int64_t width) {
    return RegionSpec({{0, 0, width, height, 0}}, height, width);
  }

  bool contains(std::int64_t x, std::int64_t y) const {
    return x >= 0 && x < width_ && y >= 0 && y < height_ &&
           mask_[static_cast<std::size_t>(y * width_ + x)] != 0;
  }

  std::int64_t count() const { return count_; }
  std::int64_t height() const { return height_; }
  std::int64_t width() const { return width_; }
  const std::vector<SignAnnotation>& boxes() const { return boxes_; }

 private:
  std::vector<SignAnnotation> boxes_;
  std::int64_t height_, width_;
  std::vector<unsigned char> mask_;
  std::int64_t count_ = 0;
};

/// Coupling factors and Tversky parameters for the composite training loss.
struct LossWeights {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double alpha = 0.5;
  double beta = 0.5;
  double gamma = 1.0;
  double epsilon = 1e-6;

  void validate() const {
    require(lambda1 >= 0.0 && lambda2 >= 0.0, "loss weights: lambdas must be non-negative");
    require(alpha >= 0.0 && alpha <= 1.0 && beta >= 0.0 && beta <= 1.0,
            "loss weights: alpha and beta must lie in [0,1]");
    require(std::abs(alpha + beta - 1.0) <= 1e-12, "loss weights: alpha + beta must equal 1");
    require(gamma >= 0.0, "loss weights: gamma must be non-negative");
    require(epsilon > 0.0, "loss weights: epsilon must be positive");
  }
};

/// Which area the reconstruction losses integrate over: the union of sign
/// boxes, or the whole frame (used by ablation variants).
enum class RegionMode { kSign, kFull };

inline std::string to_string(RegionMode m) {
  return m == RegionMode::kSign ? "sign" : "full";
}

/// Per-challenge coupling factors. The only named preset, "paper-table-2",
/// carries the tuned per-challenge optimum values.
inline LossWeights loss_weights_preset(const std::string& preset, ChallengeKind kind) {
  require(preset == "paper-table-2", "unknown loss-weight preset: '" + preset + "'");
  LossWeights w;
  switch (kind) {
    case ChallengeKind::kRain: w.lambda1 = 5.0; w.lambda2 = 5.0; break;
    case ChallengeKind::kSnow: w.lambda1 = 1.0; w.lambda2 = 10.0; break;
    case ChallengeKind::kDirtyLens: w.lambda1 = 10.0; w.lambda2 = 10.0; break;
    case ChallengeKind::kLensBlur: w.lambda1 = 0.5; w.lambda2 = 1.0; break;
    case ChallengeKind::kHaze: w.lambda1 = 0.5; w.lambda2 = 5.0; break;
    case ChallengeKind::kNone:
      throw Error("loss weights: no preset exists for the challenge-free kind");
  }
  w.validate();
  return w;
}

/// The composite loss of one training example, kept alongside its parts.
struct LossBundle {
  double l_enhance_sign = 0.0;
  double l_content_sign = 0.0;
  double l_localizer = 0.0;
  double l_total = 0.0;
};

/// Mean absolute error restricted to the region: sum of |R - T| over region
/// pixels and channels, divided by (region pixel count x channels). Pixels
/// outside the region contribute exactly nothing, to the loss and to the
/// gradient alike. d_reconstructed, when given, receives d(loss)/dR.
inline double masked_mae(const Frame& reconstructed, const Frame& target,
                         const RegionSpec& region, Tensor* d_reconstructed = nullptr) {
  require(reconstructed.pixels.same_shape(target.pixels),
          "masked_mae: frame shapes differ: " + Tensor::shape_str(reconstructed.pixels.shape()) +
              " vs " + Tensor::shape_str(target.pixels.shape()));
  require(region.height() == reconstructed.height() && region.width() == reconstructed.width(),
          "masked_mae: region built for a different frame size");
  require(region.count() > 0, "masked_mae: empty region");
  const std::int64_t channels = 3;
  const double denom = static_cast<double>(region.count() * channels);
  if (d_reconstructed) *d_reconstructed = Tensor::zeros(reconstructed.pixels.shape());
  double acc = 0.0;
  for (std::int64_t y = 0; y < reconstructed.height(); ++y)
    for (std::int64_t x = 0; x < reconstructed.width(); ++x) {
      if (!region.contains(x, y)) continue;
      for (std::int64_t c = 0; c < channels; ++c) {
        const double diff = reconstructed.at(y, x, c) - target.at(y, x, c);
        acc += std::abs(diff);
        if (d_reconstructed)
          d_reconstructed->at3(c, y, x) = (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0)) / denom;
      }
    }
  return acc / denom;
}

/// Feature extractor behind the feature-space restoration loss. forward()
/// with need_backward=true caches activations; backward_input() then maps a
/// feature-space gradient back to the input image.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual Tensor forward(const Tensor& chw, bool need_backward) = 0;
  virtual Tensor backward_input(const Tensor& d_features) = 0;
  virtual std::int64_t stride() const = 0;
};

/// phi = identity: feature space is the image itself (stride 1).
class IdentityFeatures : public FeatureExtractor {
 public:
  Tensor forward(const Tensor& chw, bool /*need_backward*/) override { return chw; }
  Tensor backward_input(const Tensor& d_features) override { return d_features; }
  std::int64_t stride() const override { return 1; }
};

/// phi = non-overlapping k x k average pooling (floor semantics), a fixed
/// parameter-free extractor used by tests and available in configs.
class AvgPoolFeatures : public FeatureExtractor {
 public:
  explicit AvgPoolFeatures(std::int64_t k) : k_(k) {
    require(k >= 1, "avg-pool features: kernel must be >= 1");
  }

  Tensor forward(const Tensor& chw, bool /*need_backward*/) override {
    require(chw.ndim() == 3, "avg-pool features: expected CHW input");
    in_h_ = chw.dim(1);
    in_w_ = chw.dim(2);
    const std::int64_t c_n = chw.dim(0), ho = in_h_ / k_, wo = in_w_ / k_;
    Tensor out({c_n, ho, wo});
    for (std::int64_t c = 0; c < c_n; ++c)
      for (std::int64_t oy = 0; oy < ho; ++oy)
        for (std::int64_t ox = 0; ox < wo; ++ox) {
          double acc = 0.0;
          for (std::int64_t dy = 0; dy < k_; ++dy)
            for (std::int64_t dx = 0; dx < k_; ++dx)
              acc += chw.at3(c, oy * k_ + dy, ox * k_ + dx);
          out.at3(c, oy, ox) = acc / static_cast<double>(k_ * k_);
        }
    return out;
  }

  Tensor backward_input(const Tensor& d_features) override {
    const std::int64_t c_n = d_features.dim(0), ho = d_features.dim(1), wo = d_features.dim(2);
    Tensor dx = Tensor::zeros({c_n, in_h_, in_w_});
    for (std::int64_t c = 0; c < c_n; ++c)
      for (std::int64_t oy = 0; oy < ho; ++oy)
        for (std::int64_t ox = 0; ox < wo; ++ox) {
          const double g = d_features.at3(c, oy, ox) / static_cast<double>(k_ * k_);
          for (std::int64_t dy = 0; dy < k_; ++dy)
            for (std::int64_t dx_ = 0; dx_ < k_; ++dx_)
              dx.at3(c, oy * k_ + dy, ox * k_ + dx_) = g;
        }
    return dx;
  }

  std::int64_t stride() const override { return k_; }

 private:
  std::int64_t k_;
  std::int64_t in_h_ = 0, in_w_ = 0;
};

/// phi = the first two convolution blocks of a trained sign classifier
/// (stride 4). The classifier is treated as frozen: its parameter gradients
/// are zeroed again after each backward pass through it.
class SignNetFeatures : public FeatureExtractor {
 public:
  explicit SignNetFeatures(SignClassifier& net) : net_(&net) {}

  Tensor forward(const Tensor& chw, bool need_backward) override {
    require(chw.ndim() == 3, "sign-net features: expected CHW input");
    const Tensor batched = chw.reshaped({1, chw.dim(0), chw.dim(1), chw.dim(2)});
    const Tensor f = net_->features(batched, need_backward);
    return f.reshaped({f.dim(1), f.dim(2), f.dim(3)});
  }

  Tensor backward_input(const Tensor& d_features) override {
    const Tensor batched =
        d_features.reshaped({1, d_features.dim(0), d_features.dim(1), d_features.dim(2)});
    const Tensor dx = net_->features_backward(batched);
    for (nn::Param* p : net_->params()) p->grad.fill(0.0);  // keep the extractor frozen
    return dx.reshaped({dx.dim(1), dx.dim(2), dx.dim(3)});
  }

  std::int64_t stride() const override { return net_->feature_stride(); }

 private:
  SignClassifier* net_;
};

/// Feature-space restoration loss: MAE between phi(R) and phi(T) over the
/// feature cells whose receptive-field centre pixel (stride*i + (stride-1)/2)
/// lies in the region, divided by (cell count x feature channels).
inline double content_loss(const Frame& reconstructed, const Frame& target,
                           const RegionSpec& region, FeatureExtractor& phi,
                           Tensor* d_reconstructed = nullptr) {
  require(reconstructed.pixels.same_shape(target.pixels),
          "content_loss: frame shapes differ");
  require(region.height() == reconstructed.height() && region.width() == reconstructed.width(),
          "content_loss: region built for a different frame size");
  require(region.count() > 0, "content_loss: empty region");
  const Tensor ft = phi.forward(target.pixels, /*need_backward=*/false);
  const Tensor fr = phi.forward(reconstructed.pixels, /*need_backward=*/d_reconstructed != nullptr);
  require(fr.same_shape(ft), "content_loss: extractor output shapes differ");
  require(fr.ndim() == 3, "content_loss: extractor must produce CHW features");
  const std::int64_t cf = fr.dim(0), hf = fr.dim(1), wf = fr.dim(2);
  require(hf >= 1 && wf >= 1, "content_loss: extractor output smaller than 1x1");
  const std::int64_t stride = phi.stride();
  const std::int64_t centre_off = (stride - 1) / 2;

  std::vector<std::pair<std::int64_t, std::int64_t>> cells;
  for (std::int64_t i = 0; i < hf; ++i)
    for (std::int64_t j = 0; j < wf; ++j)
      if (region.contains(stride * j + centre_off, stride * i + centre_off))
        cells.emplace_back(i, j);
  require(!cells.empty(), "content_loss: no feature cells cover the region");

  const double denom = static_cast<double>(cells.size()) * static_cast<double>(cf);
  double acc = 0.0;
  Tensor d_feat;
  if (d_reconstructed) d_feat = Tensor::zeros(fr.shape());
  for (const auto& [i, j] : cells)
    for (std::int64_t c = 0; c < cf; ++c) {
      const double diff = fr.at3(c, i, j) - ft.at3(c, i, j);
      acc += std::abs(diff);
      if (d_reconstructed)
        d_feat.at3(c, i, j) = (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0)) / denom;
    }
  if (d_reconstructed) *d_reconstructed = phi.backward_input(d_feat);
  return acc / denom;
}

/// Localizer loss: one minus the soft Tversky index plus an (unnormalised) L1
/// term. P is a [0,1] probability mask, G a binary ground-truth mask. Soft
/// set sizes: |P n G| = sum P*G, |P - G| = sum P*(1-G), |G - P| = sum (1-P)*G.
/// d_pred, when given, receives d(loss)/dP.
inline double tversky_l1_loss(const Tensor& pred, const Tensor& gt, const LossWeights& weights,
                              Tensor* d_pred = nullptr) {
  weights.validate();
  require(pred.same_shape(gt), "tversky_l1: mask shapes differ: " +
                                   Tensor::shape_str(pred.shape()) + " vs " +
                                   Tensor::shape_str(gt.shape()));
  require(pred.ndim() == 2, "tversky_l1: expected {H,W} masks");
  double inter = 0.0, p_not_g = 0.0, g_not_p = 0.0, l1 = 0.0;
  for (std::int64_t i = 0; i < pred.numel(); ++i) {
    const double p = pred[i], g = gt[i];
    require(p >= 0.0 && p <= 1.0, "tversky_l1: prediction outside [0,1]");
    require(g == 0.0 || g == 1.0, "tversky_l1: ground truth must be binary");
    inter += p * g;
    p_not_g += p * (1.0 - g);
    g_not_p += (1.0 - p) * g;
    l1 += std::abs(p - g);
  }
  const double denom = inter + weights.alpha * p_not_g + weights.beta * g_not_p + weights.epsilon;
  if (d_pred) {
    *d_pred = Tensor::zeros(pred.shape());
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
      const double p = pred[i], g = gt[i];
      // d(inter)/dp = g; d(p_not_g)/dp = 1-g; d(g_not_p)/dp = -g
      const double d_denom = g + weights.alpha * (1.0 - g) - weights.beta * g;
      const double d_index = (g * denom - inter * d_denom) / (denom * denom);
      const double d_l1 = p > g ? 1.0 : (p < g ? -1.0 : 0.0);
      (*d_pred)[i] = -d_index + weights.gamma * d_l1;
    }
  }
  return 1.0 - inter / denom + weights.gamma * l1;
}

/// Eq-style composite: total = enhance + lambda1*content + lambda2*localizer.
inline LossBundle total_loss(double l_enhance_sign, double l_content_sign, double l_localizer,
                             const LossWeights& weights) {
  weights.validate();
  require(l_enhance_sign >= 0.0 && l_content_sign >= 0.0 && l_localizer >= 0.0,
          "total_loss: component losses must be non-negative");
  LossBundle b;
  b.l_enhance_sign = l_enhance_sign;
  b.l_content_sign = l_content_sign;
  b.l_localizer = l_localizer;
  b.l_total = l_enhance_sign + weights.lambda1 * l_content_sign + weights.lambda2 * l_localizer;
  return b;
}

}  // namespace tsdr
