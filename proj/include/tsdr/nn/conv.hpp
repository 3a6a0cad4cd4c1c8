#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tsdr/nn/gemm.hpp"
#include "tsdr/nn/layer.hpp"
#include "tsdr/rng.hpp"

namespace tsdr::nn {

enum class PadMode { kZero, kReflect };

namespace detail {

// Map a (possibly out-of-range) coordinate into [0,n) for the given padding
// mode. Returns -1 where zero padding reads a constant 0. Reflection mirrors
// without repeating the border sample and supports pad <= n-1.
inline std::int64_t pad_index(std::int64_t i, std::int64_t n, PadMode mode) {
  if (i >= 0 && i < n) return i;
  if (mode == PadMode::kZero) return -1;
  if (i < 0) i = -i;
  if (i >= n) i = 2 * n - 2 - i;
  return i;
}

}  // namespace detail

/// 2D convolution over NCHW tensors, implemented as im2col + GEMM. backward()
/// rebuilds the column matrix from the cached input instead of caching it,
/// trading a little copy time for a much smaller memory footprint.
class Conv2d : public Layer {
 public:
  Conv2d(std::int64_t in_ch, std::int64_t out_ch, std::int64_t kernel, std::int64_t stride,
         std::int64_t pad, PadMode pad_mode, Rng& rng, const std::string& name,
         bool with_bias = true)
      : in_ch_(in_ch),
        out_ch_(out_ch),
        k_(kernel),
        stride_(stride),
        pad_(pad),
        pad_mode_(pad_mode),
        has_bias_(with_bias) {
    require(in_ch > 0 && out_ch > 0 && kernel > 0 && stride > 0 && pad >= 0,
            "conv2d: bad hyperparameters");
    const double std = std::sqrt(2.0 / static_cast<double>(in_ch * kernel * kernel));
    weight_ = Param(Tensor::randn({out_ch, in_ch, kernel, kernel}, rng, std), name + ".weight");
    if (has_bias_) bias_ = Param(Tensor::zeros({out_ch}), name + ".bias");
  }

  Tensor forward(const Tensor& x, bool train) override {
    require(x.ndim() == 4 && x.dim(1) == in_ch_, "conv2d: expected {N," +
                                                     std::to_string(in_ch_) + ",H,W}, got " +
                                                     Tensor::shape_str(x.shape()));
    const std::int64_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
    require(h + 2 * pad_ >= k_ && w + 2 * pad_ >= k_, "conv2d: input smaller than kernel");
    if (pad_mode_ == PadMode::kReflect)
      require(pad_ <= h - 1 && pad_ <= w - 1, "conv2d: reflect pad needs pad <= size-1");
    const std::int64_t ho = (h + 2 * pad_ - k_) / stride_ + 1;
    const std::int64_t wo = (w + 2 * pad_ - k_) / stride_ + 1;
    const auto map = build_map(h, w, ho, wo);

    Tensor out({n, out_ch_, ho, wo});
    const std::int64_t rows = in_ch_ * k_ * k_, cols = ho * wo;
    Tensor col({rows, cols});
    for (std::int64_t s = 0; s < n; ++s) {
      fill_col(x, s, map, col);
      gemm_nn(weight_.value.data(), col.data(), out.data() + s * out_ch_ * cols, out_ch_, rows,
              cols);
    }
    if (has_bias_)
      for (std::int64_t s = 0; s < n; ++s)
        for (std::int64_t c = 0; c < out_ch_; ++c) {
          double* dst = out.data() + (s * out_ch_ + c) * cols;
          const double b = bias_.value[c];
          for (std::int64_t i = 0; i < cols; ++i) dst[i] += b;
        }
    if (train) {
      cached_x_ = x;
      has_cache_ = true;
    }
    return out;
  }

  Tensor backward(const Tensor& dy) override {
    require(has_cache_, "conv2d backward: no cached forward pass");
    const Tensor& x = cached_x_;
    const std::int64_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::int64_t ho = dy.dim(2), wo = dy.dim(3);
    require(dy.ndim() == 4 && dy.dim(0) == n && dy.dim(1) == out_ch_,
            "conv2d backward: gradient shape mismatch");
    const auto map = build_map(h, w, ho, wo);

    const std::int64_t rows = in_ch_ * k_ * k_, cols = ho * wo;
    Tensor col({rows, cols}), dcol({rows, cols});
    Tensor dx = Tensor::zeros(x.shape());
    for (std::int64_t s = 0; s < n; ++s) {
      const double* dy_s = dy.data() + s * out_ch_ * cols;
      fill_col(x, s, map, col);
      gemm_nt(dy_s, col.data(), weight_.grad.data(), out_ch_, cols, rows, /*accumulate=*/true);
      if (has_bias_)
        for (std::int64_t c = 0; c < out_ch_; ++c) {
          double acc = 0.0;
          for (std::int64_t i = 0; i < cols; ++i) acc += dy_s[c * cols + i];
          bias_.grad[c] += acc;
        }
      gemm_tn(weight_.value.data(), dy_s, dcol.data(), rows, out_ch_, cols);
      // col2im: scatter-add through the same index map used by the forward
      // gather, which makes this the exact adjoint for both padding modes.
      double* dx_s = dx.data() + s * in_ch_ * h * w;
      for (std::int64_t c = 0; c < in_ch_; ++c)
        for (std::int64_t kk = 0; kk < k_ * k_; ++kk) {
          const double* src = dcol.data() + (c * k_ * k_ + kk) * cols;
          const std::int64_t* m = map.data() + kk * cols;
          for (std::int64_t i = 0; i < cols; ++i)
            if (m[i] >= 0) dx_s[c * h * w + m[i]] += src[i];
        }
    }
    cached_x_ = Tensor();
    has_cache_ = false;
    return dx;
  }

  void collect_params(std::vector<Param*>& out) override {
    out.push_back(&weight_);
    if (has_bias_) out.push_back(&bias_);
  }

  std::string kind() const override { return "conv2d"; }

  Param& weight() { return weight_; }
  Param& bias() { return bias_; }

 private:
  // Spatial gather map: entry [ (ky*k+kx)*Ho*Wo + oy*Wo+ox ] is the flattened
  // input index y*W+x feeding that kernel tap, or -1 for zero padding.
  std::vector<std::int64_t> build_map(std::int64_t h, std::int64_t w, std::int64_t ho,
                                      std::int64_t wo) const {
    std::vector<std::int64_t> map(static_cast<std::size_t>(k_ * k_ * ho * wo));
    std::size_t idx = 0;
    for (std::int64_t ky = 0; ky < k_; ++ky)
      for (std::int64_t kx = 0; kx < k_; ++kx)
        for (std::int64_t oy = 0; oy < ho; ++oy) {
          const std::int64_t yi = detail::pad_index(oy * stride_ + ky - pad_, h, pad_mode_);
          for (std::int64_t ox = 0; ox < wo; ++ox) {
            const std::int64_t xi = detail::pad_index(ox * stride_ + kx - pad_, w, pad_mode_);
            map[idx++] = (yi < 0 || xi < 0) ? -1 : yi * w + xi;
          }
        }
    return map;
  }

  void fill_col(const Tensor& x, std::int64_t sample, const std::vector<std::int64_t>& map,
                Tensor& col) const {
    const std::int64_t h = x.dim(2), w = x.dim(3), cols = col.dim(1);
    const double* x_s = x.data() + sample * in_ch_ * h * w;
    for (std::int64_t c = 0; c < in_ch_; ++c)
      for (std::int64_t kk = 0; kk < k_ * k_; ++kk) {
        double* dst = col.data() + (c * k_ * k_ + kk) * cols;
        const std::int64_t* m = map.data() + kk * cols;
        const double* src = x_s + c * h * w;
        for (std::int64_t i = 0; i < cols; ++i) dst[i] = m[i] >= 0 ? src[m[i]] : 0.0;
      }
  }

  std::int64_t in_ch_, out_ch_, k_, stride_, pad_;
  PadMode pad_mode_;
  bool has_bias_;
  Param weight_, bias_;
  Tensor cached_x_;
  bool has_cache_ = false;
};

/// Transposed 2D convolution (fractionally strided). Output size follows
/// (in-1)*stride - 2*pad + kernel + output_padding; with kernel 3, stride 2,
/// pad 1, output_padding 1 this doubles the spatial size exactly. Implemented
/// as the adjoint of Conv2d through a shared scatter map, with zero padding.
class ConvTranspose2d : public Layer {
 public:
  ConvTranspose2d(std::int64_t in_ch, std::int64_t out_ch, std::int64_t kernel,
                  std::int64_t stride, std::int64_t pad, std::int64_t output_padding, Rng& rng,
                  const std::string& name, bool with_bias = true)
      : in_ch_(in_ch),
        out_ch_(out_ch),
        k_(kernel),
        stride_(stride),
        pad_(pad),
        out_pad_(output_padding),
        has_bias_(with_bias) {
    require(in_ch > 0 && out_ch > 0 && kernel > 0 && stride > 0 && pad >= 0,
            "conv_transpose2d: bad hyperparameters");
    require(output_padding >= 0 && output_padding < stride,
            "conv_transpose2d: output_padding must lie in [0, stride)");
    const double std = std::sqrt(2.0 / static_cast<double>(in_ch * kernel * kernel));
    weight_ = Param(Tensor::randn({in_ch, out_ch, kernel, kernel}, rng, std), name + ".weight");
    if (has_bias_) bias_ = Param(Tensor::zeros({out_ch}), name + ".bias");
  }

  Tensor forward(const Tensor& x, bool train) override {
    require(x.ndim() == 4 && x.dim(1) == in_ch_, "conv_transpose2d: expected {N," +
                                                     std::to_string(in_ch_) + ",H,W}, got " +
                                                     Tensor::shape_str(x.shape()));
    const std::int64_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::int64_t ho = (h - 1) * stride_ - 2 * pad_ + k_ + out_pad_;
    const std::int64_t wo = (w - 1) * stride_ - 2 * pad_ + k_ + out_pad_;
    require(ho >= 1 && wo >= 1, "conv_transpose2d: output would be empty");
    const auto map = build_map(h, w, ho, wo);

    const std::int64_t rows = out_ch_ * k_ * k_, cols = h * w;
    Tensor col({rows, cols});
    Tensor out = Tensor::zeros({n, out_ch_, ho, wo});
    for (std::int64_t s = 0; s < n; ++s) {
      gemm_tn(weight_.value.data(), x.data() + s * in_ch_ * cols, col.data(), rows, in_ch_, cols);
      double* out_s = out.data() + s * out_ch_ * ho * wo;
      for (std::int64_t c = 0; c < out_ch_; ++c)
        for (std::int64_t kk = 0; kk < k_ * k_; ++kk) {
          const double* src = col.data() + (c * k_ * k_ + kk) * cols;
          const std::int64_t* m = map.data() + kk * cols;
          for (std::int64_t i = 0; i < cols; ++i)
            if (m[i] >= 0) out_s[c * ho * wo + m[i]] += src[i];
        }
    }
    if (has_bias_)
      for (std::int64_t s = 0; s < n; ++s)
        for (std::int64_t c = 0; c < out_ch_; ++c) {
          double* dst = out.data() + (s * out_ch_ + c) * ho * wo;
          const double b = bias_.value[c];
          for (std::int64_t i = 0; i < ho * wo; ++i) dst[i] += b;
        }
    if (train) {
      cached_x_ = x;
      has_cache_ = true;
    }
    return out;
  }

  Tensor backward(const Tensor& dy) override {
    require(has_cache_, "conv_transpose2d backward: no cached forward pass");
    const Tensor& x = cached_x_;
    const std::int64_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::int64_t ho = dy.dim(2), wo = dy.dim(3);
    require(dy.ndim() == 4 && dy.dim(0) == n && dy.dim(1) == out_ch_,
            "conv_transpose2d backward: gradient shape mismatch");
    const auto map = build_map(h, w, ho, wo);

    const std::int64_t rows = out_ch_ * k_ * k_, cols = h * w;
    Tensor colg({rows, cols});
    Tensor dx({n, in_ch_, h, w});
    for (std::int64_t s = 0; s < n; ++s) {
      const double* dy_s = dy.data() + s * out_ch_ * ho * wo;
      for (std::int64_t c = 0; c < out_ch_; ++c)
        for (std::int64_t kk = 0; kk < k_ * k_; ++kk) {
          double* dst = colg.data() + (c * k_ * k_ + kk) * cols;
          const std::int64_t* m = map.data() + kk * cols;
          for (std::int64_t i = 0; i < cols; ++i)
            dst[i] = m[i] >= 0 ? dy_s[c * ho * wo + m[i]] : 0.0;
        }
      gemm_nt(x.data() + s * in_ch_ * cols, colg.data(), weight_.grad.data(), in_ch_, cols, rows,
              /*accumulate=*/true);
      gemm_nn(weight_.value.data(), colg.data(), dx.data() + s * in_ch_ * cols, in_ch_, rows,
              cols);
      if (has_bias_)
        for (std::int64_t c = 0; c < out_ch_; ++c) {
          double acc = 0.0;
          for (std::int64_t i = 0; i < ho * wo; ++i) acc += dy_s[c * ho * wo + i];
          bias_.grad[c] += acc;
        }
    }
    cached_x_ = Tensor();
    has_cache_ = false;
    return dx;
  }

  void collect_params(std::vector<Param*>& out) override {
    out.push_back(&weight_);
    if (has_bias_) out.push_back(&bias_);
  }

  std::string kind() const override { return "conv_transpose2d"; }

 private:
  // Scatter map: entry [ (ky*k+kx)*H*W + iy*W+ix ] is the flattened output
  // index receiving input cell (iy,ix) through kernel tap (ky,kx), or -1 when
  // the tap lands in the trimmed padding band.
  std::vector<std::int64_t> build_map(std::int64_t h, std::int64_t w, std::int64_t ho,
                                      std::int64_t wo) const {
    std::vector<std::int64_t> map(static_cast<std::size_t>(k_ * k_ * h * w));
    std::size_t idx = 0;
    for (std::int64_t ky = 0; ky < k_; ++ky)
      for (std::int64_t kx = 0; kx < k_; ++kx)
        for (std::int64_t iy = 0; iy < h; ++iy) {
          const std::int64_t y = iy * stride_ + ky - pad_;
          for (std::int64_t ix = 0; ix < w; ++ix) {
            const std::int64_t xx = ix * stride_ + kx - pad_;
            map[idx++] = (y < 0 || y >= ho || xx < 0 || xx >= wo) ? -1 : y * wo + xx;
          }
        }
    return map;
  }

  std::int64_t in_ch_, out_ch_, k_, stride_, pad_, out_pad_;
  bool has_bias_;
  Param weight_, bias_;
  Tensor cached_x_;
  bool has_cache_ = false;
};

}  // namespace tsdr::nn
