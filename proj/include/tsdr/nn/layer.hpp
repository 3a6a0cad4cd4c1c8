#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "tsdr/tensor.hpp"

namespace tsdr::nn {

/// A trainable tensor together with its gradient accumulator. Gradients are
/// accumulated across backward calls until explicitly zeroed, which is what
/// makes gradient-accumulation training loops work.
struct Param {
  Tensor value;
  Tensor grad;
  std::string name;

  Param() = default;
  Param(Tensor v, std::string n)
      : value(std::move(v)), grad(Tensor::zeros(value.shape())), name(std::move(n)) {}
};

/// Base class for differentiable layers. forward() caches whatever backward()
/// needs only when train is true; backward() consumes the cache, accumulates
/// parameter gradients, and returns the gradient w.r.t. the layer input.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, bool train) = 0;
  virtual Tensor backward(const Tensor& dy) = 0;
  virtual void collect_params(std::vector<Param*>& /*out*/) {}
  /// Non-trainable state (e.g. running statistics) that checkpoints persist
  /// but optimisers must not touch.
  virtual void collect_buffers(std::vector<Param*>& /*out*/) {}
  virtual std::string kind() const = 0;
};

/// Runs children in order; backward runs them in reverse.
class Sequential : public Layer {
 public:
  template <typename L, typename... Args>
  L& emplace(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

  Tensor forward(const Tensor& x, bool train) override {
    Tensor cur = x;
    for (auto& l : layers_) cur = l->forward(cur, train);
    return cur;
  }

  Tensor backward(const Tensor& dy) override {
    Tensor cur = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
    return cur;
  }

  void collect_params(std::vector<Param*>& out) override {
    for (auto& l : layers_) l->collect_params(out);
  }

  void collect_buffers(std::vector<Param*>& out) override {
    for (auto& l : layers_) l->collect_buffers(out);
  }

  std::string kind() const override { return "sequential"; }

  std::size_t size() const { return layers_.size(); }
  Layer& at(std::size_t i) { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

inline void zero_grads(const std::vector<Param*>& params) {
  for (Param* p : params) p->grad.fill(0.0);
}

inline std::int64_t count_params(const std::vector<Param*>& params) {
  std::int64_t n = 0;
  for (const Param* p : params) n += p->value.numel();
  return n;
}

/// FNV-1a digest over all parameter values, in collection order. Backs the
/// frozen-weights contract: recompute after training steps and compare.
inline std::uint64_t params_checksum(const std::vector<Param*>& params) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const Param* p : params) h = p->value.byte_hash(h);
  return h;
}

}  // namespace tsdr::nn
