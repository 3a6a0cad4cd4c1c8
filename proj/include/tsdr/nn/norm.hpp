#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tsdr/nn/layer.hpp"

namespace tsdr::nn {

/// Instance normalisation: each (sample, channel) plane is normalised by its
/// own mean and (biased) variance. Stateless across calls, so train and eval
/// behave identically. Affine scale/shift is optional and off by default.
class InstanceNorm2d : public Layer {
 public:
  explicit InstanceNorm2d(std::int64_t channels, const std::string& name, bool affine = false,
                          double eps = 1e-5)
      : channels_(channels), affine_(affine), eps_(eps) {
    if (affine_) {
      gamma_ = Param(Tensor::full({channels}, 1.0), name + ".gamma");
      beta_ = Param(Tensor::zeros({channels}), name + ".beta");
    }
  }

  Tensor forward(const Tensor& x, bool train) override {
    require(x.ndim() == 4 && x.dim(1) == channels_, "instance_norm: expected {N," +
                                                        std::to_string(channels_) + ",H,W}");
    const std::int64_t n = x.dim(0), hw = x.dim(2) * x.dim(3);
    require(hw > 0, "instance_norm: empty plane");
    Tensor out(x.shape());
    Tensor xhat(x.shape());
    Tensor inv_std({n, channels_});
    for (std::int64_t s = 0; s < n; ++s)
      for (std::int64_t c = 0; c < channels_; ++c) {
        const double* src = x.data() + (s * channels_ + c) * hw;
        double mean = 0.0;
        for (std::int64_t i = 0; i < hw; ++i) mean += src[i];
        mean /= static_cast<double>(hw);
        double var = 0.0;
        for (std::int64_t i = 0; i < hw; ++i) var += (src[i] - mean) * (src[i] - mean);
        var /= static_cast<double>(hw);
        const double is = 1.0 / std::sqrt(var + eps_);
        inv_std.at2(s, c) = is;
        const double g = affine_ ? gamma_.value[c] : 1.0;
        const double b = affine_ ? beta_.value[c] : 0.0;
        double* xh = xhat.data() + (s * channels_ + c) * hw;
        double* dst = out.data() + (s * channels_ + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i) {
          xh[i] = (src[i] - mean) * is;
          dst[i] = g * xh[i] + b;
        }
      }
    if (train) {
      cached_xhat_ = std::move(xhat);
      cached_inv_std_ = std::move(inv_std);
      has_cache_ = true;
    }
    return out;
  }

  Tensor backward(const Tensor& dy) override {
    require(has_cache_, "instance_norm backward: no cached forward pass");
    const Tensor& xhat = cached_xhat_;
    require(dy.same_shape(xhat), "instance_norm backward: gradient shape mismatch");
    const std::int64_t n = dy.dim(0), hw = dy.dim(2) * dy.dim(3);
    Tensor dx(dy.shape());
    for (std::int64_t s = 0; s < n; ++s)
      for (std::int64_t c = 0; c < channels_; ++c) {
        const double* g_dy = dy.data() + (s * channels_ + c) * hw;
        const double* xh = xhat.data() + (s * channels_ + c) * hw;
        const double gscale = affine_ ? gamma_.value[c] : 1.0;
        double mean_dy = 0.0, mean_dyxh = 0.0;
        for (std::int64_t i = 0; i < hw; ++i) {
          mean_dy += g_dy[i];
          mean_dyxh += g_dy[i] * xh[i];
        }
        if (affine_) {
          gamma_.grad[c] += mean_dyxh;
          beta_.grad[c] += mean_dy;
        }
        mean_dy = mean_dy * gscale / static_cast<double>(hw);
        mean_dyxh = mean_dyxh * gscale / static_cast<double>(hw);
        const double is = cached_inv_std_.at2(s, c);
        double* dst = dx.data() + (s * channels_ + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i)
          dst[i] = is * (gscale * g_dy[i] - mean_dy - xh[i] * mean_dyxh);
      }
    cached_xhat_ = Tensor();
    cached_inv_std_ = Tensor();
    has_cache_ = false;
    return dx;
  }

  void collect_params(std::vector<Param*>& out) override {
    if (affine_) {
      out.push_back(&gamma_);
      out.push_back(&beta_);
    }
  }

  std::string kind() const override { return "instance_norm2d"; }

 private:
  std::int64_t channels_;
  bool affine_;
  double eps_;
  Param gamma_, beta_;
  Tensor cached_xhat_, cached_inv_std_;
  bool has_cache_ = false;
};

/// Batch normalisation with affine parameters and running statistics.
/// Normalisation and the running variance both use the biased estimator, so a
/// checkpoint round-trip reproduces eval outputs bit-for-bit.
class BatchNorm2d : public Layer {
 public:
  explicit BatchNorm2d(std::int64_t channels, const std::string& name, double eps = 1e-5,
                       double momentum = 0.1)
      : channels_(channels), eps_(eps), momentum_(momentum) {
    gamma_ = Param(Tensor::full({channels}, 1.0), name + ".gamma");
    beta_ = Param(Tensor::zeros({channels}), name + ".beta");
    running_mean_ = Param(Tensor::zeros({channels}), name + ".running_mean");
    running_var_ = Param(Tensor::full({channels}, 1.0), name + ".running_var");
  }

  Tensor forward(const Tensor& x, bool train) override {
    require(x.ndim() == 4 && x.dim(1) == channels_,
            "batch_norm: expected {N," + std::to_string(channels_) + ",H,W}");
    const std::int64_t n = x.dim(0), hw = x.dim(2) * x.dim(3);
    const std::int64_t count = n * hw;
    require(count > 0, "batch_norm: empty input");
    Tensor out(x.shape());

    if (train) {
      Tensor xhat(x.shape());
      inv_std_ = Tensor({channels_});
      for (std::int64_t c = 0; c < channels_; ++c) {
        double mean = 0.0;
        for (std::int64_t s = 0; s < n; ++s) {
          const double* src = x.data() + (s * channels_ + c) * hw;
          for (std::int64_t i = 0; i < hw; ++i) mean += src[i];
        }
        mean /= static_cast<double>(count);
        double var = 0.0;
        for (std::int64_t s = 0; s < n; ++s) {
          const double* src = x.data() + (s * channels_ + c) * hw;
          for (std::int64_t i = 0; i < hw; ++i) var += (src[i] - mean) * (src[i] - mean);
        }
        var /= static_cast<double>(count);
        const double is = 1.0 / std::sqrt(var + eps_);
        inv_std_[c] = is;
        running_mean_.value[c] = (1.0 - momentum_) * running_mean_.value[c] + momentum_ * mean;
        running_var_.value[c] = (1.0 - momentum_) * running_var_.value[c] + momentum_ * var;
        for (std::int64_t s = 0; s < n; ++s) {
          const double* src = x.data() + (s * channels_ + c) * hw;
          double* xh = xhat.data() + (s * channels_ + c) * hw;
          double* dst = out.data() + (s * channels_ + c) * hw;
          for (std::int64_t i = 0; i < hw; ++i) {
            xh[i] = (src[i] - mean) * is;
            dst[i] = gamma_.value[c] * xh[i] + beta_.value[c];
          }
        }
      }
      cached_xhat_ = std::move(xhat);
      has_cache_ = true;
    } else {
      for (std::int64_t c = 0; c < channels_; ++c) {
        const double is = 1.0 / std::sqrt(running_var_.value[c] + eps_);
        const double g = gamma_.value[c], b = beta_.value[c], m = running_mean_.value[c];
        for (std::int64_t s = 0; s < n; ++s) {
          const double* src = x.data() + (s * channels_ + c) * hw;
          double* dst = out.data() + (s * channels_ + c) * hw;
          for (std::int64_t i = 0; i < hw; ++i) dst[i] = g * (src[i] - m) * is + b;
        }
      }
    }
    return out;
  }

  Tensor backward(const Tensor& dy) override {
    require(has_cache_, "batch_norm backward: no cached train-mode forward pass");
    const Tensor& xhat = cached_xhat_;
    require(dy.same_shape(xhat), "batch_norm backward: gradient shape mismatch");
    const std::int64_t n = dy.dim(0), hw = dy.dim(2) * dy.dim(3);
    const auto count = static_cast<double>(n * hw);
    Tensor dx(dy.shape());
    for (std::int64_t c = 0; c < channels_; ++c) {
      double sum_dy = 0.0, sum_dyxh = 0.0;
      for (std::int64_t s = 0; s < n; ++s) {
        const double* g_dy = dy.data() + (s * channels_ + c) * hw;
        const double* xh = xhat.data() + (s * channels_ + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i) {
          sum_dy += g_dy[i];
          sum_dyxh += g_dy[i] * xh[i];
        }
      }
      gamma_.grad[c] += sum_dyxh;
      beta_.grad[c] += sum_dy;
      const double g = gamma_.value[c], is = inv_std_[c];
      const double mean_dy = sum_dy / count, mean_dyxh = sum_dyxh / count;
      for (std::int64_t s = 0; s < n; ++s) {
        const double* g_dy = dy.data() + (s * channels_ + c) * hw;
        const double* xh = xhat.data() + (s * channels_ + c) * hw;
        double* dst = dx.data() + (s * channels_ + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i)
          dst[i] = g * is * (g_dy[i] - mean_dy - xh[i] * mean_dyxh);
      }
    }
    cached_xhat_ = Tensor();
    has_cache_ = false;
    return dx;
  }

  void collect_params(std::vector<Param*>& out) override {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }

  void collect_buffers(std::vector<Param*>& out) override {
    out.push_back(&running_mean_);
    out.push_back(&running_var_);
  }

  std::string kind() const override { return "batch_norm2d"; }

 private:
  std::int64_t channels_;
  double eps_, momentum_;
  Param gamma_, beta_, running_mean_, running_var_;
  Tensor cached_xhat_, inv_std_;
  bool has_cache_ = false;
};

}  // namespace tsdr::nn
