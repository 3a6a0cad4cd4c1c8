#pragma once

#include <cmath>
#include <vector>

#include "tsdr/nn/layer.hpp"

namespace tsdr::nn {

/// Adam optimiser over a fixed parameter list. Moment buffers are keyed by
/// list position, so the list must not change between steps.
class Adam {
 public:
  explicit Adam(std::vector<Param*> params, double lr = 1e-3, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    require(lr > 0.0 && eps > 0.0, "adam: lr and eps must be positive");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
            "adam: betas must lie in [0,1)");
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Param* p : params_) {
      m_.push_back(Tensor::zeros(p->value.shape()));
      v_.push_back(Tensor::zeros(p->value.shape()));
    }
  }

  void zero_grad() { zero_grads(params_); }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Param& p = *params_[i];
      Tensor& m = m_[i];
      Tensor& v = v_[i];
      for (std::int64_t j = 0; j < p.value.numel(); ++j) {
        const double g = p.grad[j];
        m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
        v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        p.value[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  double lr() const { return lr_; }
  void set_lr(double lr) {
    require(lr > 0.0, "adam: lr must be positive");
    lr_ = lr;
  }

  const std::vector<Param*>& params() const { return params_; }

 private:
  std::vector<Param*> params_;
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

/// Reduce-on-plateau learning-rate schedule: when the monitored metric fails
/// to improve for more than `patience` consecutive epochs, the learning rate
/// is multiplied by `factor` and the patience counter restarts.
class PlateauScheduler {
 public:
  enum class Mode { kMin, kMax };

  PlateauScheduler(Mode mode, double factor = 0.5, int patience = 3, double min_lr = 1e-6)
      : mode_(mode), factor_(factor), patience_(patience), min_lr_(min_lr) {
    require(factor > 0.0 && factor < 1.0, "plateau: factor must lie in (0,1)");
    require(patience >= 0, "plateau: patience must be non-negative");
  }

  /// Feed one epoch's metric; returns true when the learning rate was reduced.
  bool step(double metric, Adam& opt) {
    const bool improved =
        !has_best_ || (mode_ == Mode::kMin ? metric < best_ : metric > best_);
    if (improved) {
      best_ = metric;
      has_best_ = true;
      bad_epochs_ = 0;
      return false;
    }
    ++bad_epochs_;
    if (bad_epochs_ <= patience_) return false;
    bad_epochs_ = 0;
    const double next = std::max(opt.lr() * factor_, min_lr_);
    if (next >= opt.lr()) return false;
    opt.set_lr(next);
    return true;
  }

  double best() const { return best_; }

 private:
  Mode mode_;
  double factor_;
  int patience_;
  double min_lr_;
  double best_ = 0.0;
  bool has_best_ = false;
  int bad_epochs_ = 0;
};

}  // namespace tsdr::nn
