#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tsdr/nn/gemm.hpp"
#include "tsdr/nn/layer.hpp"
#include "tsdr/rng.hpp"

namespace tsdr::nn {

class ReLU : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override {
    Tensor out(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
    if (train) {
      mask_ = Tensor(x.shape());
      for (std::int64_t i = 0; i < x.numel(); ++i) mask_[i] = x[i] > 0.0 ? 1.0 : 0.0;
      has_cache_ = true;
    }
    return out;
  }

  Tensor backward(const Tensor& dy) override {
    require(has_cache_ && dy.same_shape(mask_), "relu backward: no matching forward pass");
    Tensor dx(dy.shape());
    for (std::int64_t i = 0; i < dy.numel(); ++i) dx[i] = dy[i] * mask_[i];
    mask_ = Tensor();
    has_cache_ = false;
    return dx;
  }

  std::string kind() const override { return "relu"; }

 private:
  Tensor mask_;
  bool has_cache_ = false;
};

class Tanh : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override {
    Tensor out(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = std::tanh(x[i]);
    if (train) {
      y_ = out;
      has_cache_ = true;
    }
    return out;
  }

  Tensor backward(const Tensor& dy) override {
    require(has_cache_ && dy.same_shape(y_), "tanh backward: no matching forward pass");
    Tensor dx(dy.shape());
    for (std::int64_t i = 0; i < dy.numel(); ++i) dx[i] = dy[i] * (1.0 - y_[i] * y_[i]);
    y_ = Tensor();
    has_cache_ = false;
    return dx;
  }

  std::string kind() const override { return "tanh"; }

 private:
  Tensor y_;
  bool has_cache_ = false;
};

class Sigmoid : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override {
    Tensor out(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x[i]));
    if (train) {
      y_ = out;
      has_cache_ = true;
    }
    return out;
  }

  Tensor backward(const Tensor& dy) override {
    require(has_cache_ && dy.same_shape(y_), "sigmoid backward: no matching forward pass");
    Tensor dx(dy.shape());
    for (std::int64_t i = 0; i < dy.numel(); ++i) dx[i] = dy[i] * y_[i] * (1.0 - y_[i]);
    y_ = Tensor();
    has_cache_ = false;
    return dx;
  }

  std::string kind() const override { return "sigmoid"; }

 private:
  Tensor y_;
  bool has_cache_ = false;
};

/// Maps tanh output [-1,1] to image range [0,1]: y = (x + 1) / 2.
class ShiftScale : public Layer {
 public:
  Tensor forward(const Tensor& x, bool /*train*/) override {
    Tensor out(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = (x[i] + 1.0) * 0.5;
    return out;
  }

  Tensor backward(const Tensor& dy) override {
    Tensor dx(dy.shape());
    for (std::int64_t i = 0; i < dy.numel(); ++i) dx[i] = dy[i] * 0.5;
    return dx;
  }

  std::string kind() const override { return "shift_scale"; }
};

/// 2x2 max pooling with stride 2 in ceil mode: odd trailing rows/columns form
/// clipped one-wide windows instead of being dropped, and a 1x1 input passes
/// through unchanged. Backward routes gradients to the argmax positions.
class MaxPool2d : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override {
    require(x.ndim() == 4, "max_pool: expected NCHW input");
    const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::int64_t ho = (h + 1) / 2, wo = (w + 1) / 2;
    Tensor out({n, c, ho, wo});
    Tensor arg({n, c, ho, wo});
    for (std::int64_t s = 0; s < n; ++s)
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const double* src = x.data() + (s * c + ch) * h * w;
        for (std::int64_t oy = 0; oy < ho; ++oy)
          for (std::int64_t ox = 0; ox < wo; ++ox) {
            double best = -1e300;
            std::int64_t best_i = -1;
            for (std::int64_t dy = 0; dy < 2; ++dy)
              for (std::int64_t dx = 0; dx < 2; ++dx) {
                const std::int64_t y = oy * 2 + dy, xx = ox * 2 + dx;
                if (y >= h || xx >= w) continue;
                if (src[y * w + xx] > best) {
                  best = src[y * w + xx];
                  best_i = y * w + xx;
                }
              }
            out.at4(s, ch, oy, ox) = best;
            arg.at4(s, ch, oy, ox) = static_cast<double>(best_i);
          }
      }
    if (train) {
      argmax_ = std::move(arg);
      in_h_ = h;
      in_w_ = w;
      has_cache_ = true;
    }
    return out;
  }

  Tensor backward(const Tensor& dy) override {
    require(has_cache_ && dy.same_shape(argmax_), "max_pool backward: no matching forward pass");
    const std::int64_t n = dy.dim(0), c = dy.dim(1), ho = dy.dim(2), wo = dy.dim(3);
    Tensor dx = Tensor::zeros({n, c, in_h_, in_w_});
    for (std::int64_t s = 0; s < n; ++s)
      for (std::int64_t ch = 0; ch < c; ++ch) {
        double* dst = dx.data() + (s * c + ch) * in_h_ * in_w_;
        for (std::int64_t oy = 0; oy < ho; ++oy)
          for (std::int64_t ox = 0; ox < wo; ++ox)
            dst[static_cast<std::int64_t>(argmax_.at4(s, ch, oy, ox))] += dy.at4(s, ch, oy, ox);
      }
    argmax_ = Tensor();
    has_cache_ = false;
    return dx;
  }

  std::string kind() const override { return "max_pool2d"; }

 private:
  Tensor argmax_;
  std::int64_t in_h_ = 0, in_w_ = 0;
  bool has_cache_ = false;
};

/// Collapses {N,C,H,W} to {N,C} by averaging each plane.
class GlobalAvgPool : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override {
    require(x.ndim() == 4, "global_avg_pool: expected NCHW input");
    const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    require(hw > 0, "global_avg_pool: empty plane");
    Tensor out({n, c});
    for (std::int64_t s = 0; s < n; ++s)
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const double* src = x.data() + (s * c + ch) * hw;
        double acc = 0.0;
        for (std::int64_t i = 0; i < hw; ++i) acc += src[i];
        out.at2(s, ch) = acc / static_cast<double>(hw);
      }
    if (train) {
      in_h_ = x.dim(2);
      in_w_ = x.dim(3);
      has_cache_ = true;
    }
    return out;
  }

  Tensor backward(const Tensor& dy) override {
    require(has_cache_ && dy.ndim() == 2, "global_avg_pool backward: no matching forward pass");
    const std::int64_t n = dy.dim(0), c = dy.dim(1), hw = in_h_ * in_w_;
    Tensor dx({n, c, in_h_, in_w_});
    for (std::int64_t s = 0; s < n; ++s)
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const double g = dy.at2(s, ch) / static_cast<double>(hw);
        double* dst = dx.data() + (s * c + ch) * hw;
        for (std::int64_t i = 0; i < hw; ++i) dst[i] = g;
      }
    has_cache_ = false;
    return dx;
  }

  std::string kind() const override { return "global_avg_pool"; }

 private:
  std::int64_t in_h_ = 0, in_w_ = 0;
  bool has_cache_ = false;
};

/// Fully connected layer over {N,F} inputs.
class Linear : public Layer {
 public:
  Linear(std::int64_t in_f, std::int64_t out_f, Rng& rng, const std::string& name)
      : in_f_(in_f), out_f_(out_f) {
    require(in_f > 0 && out_f > 0, "linear: bad dimensions");
    const double std = std::sqrt(2.0 / static_cast<double>(in_f));
    weight_ = Param(Tensor::randn({out_f, in_f}, rng, std), name + ".weight");
    bias_ = Param(Tensor::zeros({out_f}), name + ".bias");
  }

  Tensor forward(const Tensor& x, bool train) override {
    require(x.ndim() == 2 && x.dim(1) == in_f_,
            "linear: expected {N," + std::to_string(in_f_) + "}");
    const std::int64_t n = x.dim(0);
    Tensor out({n, out_f_});
    gemm_nt(x.data(), weight_.value.data(), out.data(), n, in_f_, out_f_);
    for (std::int64_t s = 0; s < n; ++s)
      for (std::int64_t o = 0; o < out_f_; ++o) out.at2(s, o) += bias_.value[o];
    if (train) {
      cached_x_ = x;
      has_cache_ = true;
    }
    return out;
  }

  Tensor backward(const Tensor& dy) override {
    require(has_cache_ && dy.ndim() == 2 && dy.dim(1) == out_f_,
            "linear backward: no matching forward pass");
    const std::int64_t n = dy.dim(0);
    gemm_tn(dy.data(), cached_x_.data(), weight_.grad.data(), out_f_, n, in_f_,
            /*accumulate=*/true);
    for (std::int64_t s = 0; s < n; ++s)
      for (std::int64_t o = 0; o < out_f_; ++o) bias_.grad[o] += dy.at2(s, o);
    Tensor dx({n, in_f_});
    gemm_nn(dy.data(), weight_.value.data(), dx.data(), n, out_f_, in_f_);
    cached_x_ = Tensor();
    has_cache_ = false;
    return dx;
  }

  void collect_params(std::vector<Param*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  std::string kind() const override { return "linear"; }

 private:
  std::int64_t in_f_, out_f_;
  Param weight_, bias_;
  Tensor cached_x_;
  bool has_cache_ = false;
};

/// Row-wise softmax of a {N,K} logit matrix, computed stably.
inline Tensor softmax_rows(const Tensor& logits) {
  require(logits.ndim() == 2, "softmax: expected {N,K}");
  const std::int64_t n = logits.dim(0), k = logits.dim(1);
  Tensor out({n, k});
  for (std::int64_t s = 0; s < n; ++s) {
    double mx = logits.at2(s, 0);
    for (std::int64_t j = 1; j < k; ++j) mx = std::max(mx, logits.at2(s, j));
    double z = 0.0;
    for (std::int64_t j = 0; j < k; ++j) {
      out.at2(s, j) = std::exp(logits.at2(s, j) - mx);
      z += out.at2(s, j);
    }
    for (std::int64_t j = 0; j < k; ++j) out.at2(s, j) /= z;
  }
  return out;
}

/// Mean cross-entropy of {N,K} logits against integer targets. When dlogits
/// is non-null it receives d(loss)/d(logits) = (softmax - onehot) / N.
inline double cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                            Tensor* dlogits = nullptr) {
  require(logits.ndim() == 2, "cross_entropy: expected {N,K}");
  const std::int64_t n = logits.dim(0), k = logits.dim(1);
  require(static_cast<std::int64_t>(targets.size()) == n,
          "cross_entropy: target count mismatch");
  const Tensor p = softmax_rows(logits);
  double loss = 0.0;
  if (dlogits) *dlogits = p;
  for (std::int64_t s = 0; s < n; ++s) {
    const int t = targets[static_cast<std::size_t>(s)];
    require(t >= 0 && t < k, "cross_entropy: target out of range");
    loss -= std::log(std::max(p.at2(s, t), 1e-300));
    if (dlogits) dlogits->at2(s, t) -= 1.0;
  }
  if (dlogits) *dlogits *= 1.0 / static_cast<double>(n);
  return loss / static_cast<double>(n);
}

}  // namespace tsdr::nn
