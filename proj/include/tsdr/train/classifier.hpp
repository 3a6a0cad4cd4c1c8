#pragma once

// Challenge-classifier training: cross-entropy over the six challenge kinds,
// Adam with a reduce-on-plateau schedule driven by validation accuracy, and
// best-validation weight selection.

#include <array>
#include <sstream>
#include <string>
#include <vector>

#include "tsdr/manifest.hpp"
#include "tsdr/models/challenge_classifier.hpp"
#include "tsdr/train/common.hpp"

namespace tsdr {

struct ClassifierTrainConfig {
  std::int64_t batch_size = 16;
  std::int64_t epochs = 20;
  double initial_lr = 1e-3;
  int plateau_patience = 3;
  double plateau_factor = 0.5;
  std::uint64_t rng_seed = 0;

  void validate() const {
    require(batch_size >= 1, "classifier training: batch_size must be >= 1");
    require(epochs >= 0, "classifier training: epochs must be >= 0");
    require(initial_lr > 0.0, "classifier training: initial_lr must be positive");
    require(plateau_patience >= 1, "classifier training: plateau_patience must be >= 1");
    require(plateau_factor > 0.0 && plateau_factor < 1.0,
            "classifier training: plateau_factor must lie in (0,1)");
  }
};

struct ClassifierEpochStats {
  std::int64_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  bool lr_reduced = false;
};

struct ClassifierHistory {
  std::vector<ClassifierEpochStats> epochs;
  double best_val_accuracy = 0.0;

  std::string to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "epoch,lr,train_loss,train_accuracy,val_accuracy,lr_reduced\n";
    for (const auto& e : epochs)
      out << e.epoch << ',' << e.lr << ',' << e.train_loss << ',' << e.train_accuracy << ','
          << e.val_accuracy << ',' << (e.lr_reduced ? 1 : 0) << '\n';
    return out.str();
  }
};

namespace detail {

/// Argmax over one logits row, ties to the lowest index (the same rule the
/// model's classify() applies to probabilities; softmax preserves argmax).
inline int logits_argmax(const Tensor& logits, std::int64_t row) {
  int best = 0;
  for (std::int64_t j = 1; j < logits.dim(1); ++j)
    if (logits.at2(row, j) > logits.at2(row, best)) best = static_cast<int>(j);
  return best;
}

}  // namespace detail

/// Train the 6-way challenge classifier. Fails before touching the model if
/// any challenge kind is absent from the training records. Returns per-epoch
/// history; the model ends up holding the weights (and batch-norm statistics)
/// of the best validation-accuracy epoch.
inline ClassifierHistory train_challenge_classifier(ChallengeClassifier& model,
                                                    const std::vector<FrameRecord>& train_records,
                                                    const std::vector<FrameRecord>& val_records,
                                                    const ClassifierTrainConfig& cfg) {
  cfg.validate();
  require(!train_records.empty(), "classifier training: empty training split");
  require(!val_records.empty(), "classifier training: empty validation split");
  std::array<std::int64_t, kNumChallengeKinds> per_kind{};
  for (const auto& r : train_records) per_kind[static_cast<std::size_t>(r.challenge.kind)] += 1;
  for (int k = 0; k < kNumChallengeKinds; ++k)
    require(per_kind[static_cast<std::size_t>(k)] > 0,
            std::string("classifier training: no training examples of kind '") +
                to_string(static_cast<ChallengeKind>(k)) + "'");

  const std::int64_t s = model.config().input_size;
  const std::int64_t plane = 3 * s * s;
  auto preload = [&](const std::vector<FrameRecord>& records, std::vector<Tensor>& inputs,
                     std::vector<int>& labels) {
    inputs.reserve(records.size());
    labels.reserve(records.size());
    for (const auto& rec : records) {
      inputs.push_back(model.preprocess(rec.load().frame));
      labels.push_back(static_cast<int>(rec.challenge.kind));
    }
  };
  std::vector<Tensor> train_x, val_x;
  std::vector<int> train_y, val_y;
  preload(train_records, train_x, train_y);
  preload(val_records, val_x, val_y);

  const auto params = model.params();
  const auto buffers = model.buffers();
  nn::Adam opt(params, cfg.initial_lr);
  nn::PlateauScheduler sched(nn::PlateauScheduler::Mode::kMax, cfg.plateau_factor,
                             cfg.plateau_patience);

  ClassifierHistory history;
  std::vector<Tensor> best_params, best_buffers;
  double best_acc = -1.0;

  std::vector<std::size_t> order(train_x.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng::derive(cfg.rng_seed, "classifier_epoch", static_cast<std::uint64_t>(epoch))
        .shuffle(order);
    const double lr_in_effect = opt.lr();
    double loss_sum = 0.0;
    std::int64_t correct = 0;

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::int64_t b = static_cast<std::int64_t>(end - start);
      Tensor x({b, 3, s, s});
      std::vector<int> targets(static_cast<std::size_t>(b));
      for (std::int64_t i = 0; i < b; ++i) {
        const std::size_t src = order[start + static_cast<std::size_t>(i)];
        std::copy(train_x[src].data(), train_x[src].data() + plane, x.data() + i * plane);
        targets[static_cast<std::size_t>(i)] = train_y[src];
      }
      const Tensor logits = model.forward(x, /*train=*/true);
      Tensor dlogits;
      loss_sum += nn::cross_entropy(logits, targets, &dlogits) * static_cast<double>(b);
      for (std::int64_t i = 0; i < b; ++i)
        if (detail::logits_argmax(logits, i) == targets[static_cast<std::size_t>(i)]) ++correct;
      opt.zero_grad();
      model.backward(dlogits);
      opt.step();
    }

    std::int64_t val_correct = 0;
    for (std::size_t i = 0; i < val_x.size(); ++i) {
      const Tensor logits = model.forward(val_x[i], /*train=*/false);
      if (detail::logits_argmax(logits, 0) == val_y[i]) ++val_correct;
    }
    const double val_acc = static_cast<double>(val_correct) / static_cast<double>(val_x.size());
    const bool reduced = sched.step(val_acc, opt);

    if (val_acc > best_acc) {
      best_acc = val_acc;
      best_params = snapshot_values(params);
      best_buffers = snapshot_values(buffers);
    }
    history.epochs.push_back({epoch, lr_in_effect,
                              loss_sum / static_cast<double>(train_x.size()),
                              static_cast<double>(correct) / static_cast<double>(train_x.size()),
                              val_acc, reduced});
  }

  if (!best_params.empty()) {
    restore_values(params, best_params);
    restore_values(buffers, best_buffers);
    history.best_val_accuracy = best_acc;
  }
  return history;
}

/// Rows are true kinds, columns predicted kinds, both in enum order.
inline std::array<std::array<std::int64_t, kNumChallengeKinds>, kNumChallengeKinds>
confusion_matrix(ChallengeClassifier& model, const std::vector<FrameRecord>& records) {
  require(!records.empty(), "confusion_matrix: empty split");
  std::array<std::array<std::int64_t, kNumChallengeKinds>, kNumChallengeKinds> m{};
  for (const auto& rec : records) {
    const auto pred = model.classify(rec.load().frame);
    m[static_cast<std::size_t>(rec.challenge.kind)][static_cast<std::size_t>(pred.kind)] += 1;
  }
  return m;
}

}  // namespace tsdr
