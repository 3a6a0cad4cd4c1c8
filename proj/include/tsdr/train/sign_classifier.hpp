#pragma once

// Sign-class recognizer training: cross-entropy on ground-truth crops taken
// from challenge-free frames. Every class in the label space must appear in
// the training split at least once.

#include <cstring>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tsdr/losses.hpp"
#include "tsdr/manifest.hpp"
#include "tsdr/models/sign_classifier.hpp"
#include "tsdr/train/classifier.hpp"
#include "tsdr/train/common.hpp"

namespace tsdr {

struct SignTrainConfig {
  std::int64_t batch_size = 16;
  std::int64_t epochs = 20;
  double initial_lr = 1e-3;
  int plateau_patience = 3;
  double plateau_factor = 0.5;
  std::uint64_t rng_seed = 0;

  void validate() const {
    require(batch_size >= 1, "sign training: batch_size must be >= 1");
    require(epochs >= 0, "sign training: epochs must be >= 0");
    require(initial_lr > 0.0, "sign training: initial_lr must be positive");
    require(plateau_patience >= 1, "sign training: plateau_patience must be >= 1");
    require(plateau_factor > 0.0 && plateau_factor < 1.0,
            "sign training: plateau_factor must lie in (0,1)");
  }
};

/// Train the sign classifier on crops of the annotated boxes in challenge-free
/// records. Challenged records are rejected; so is a training split that lacks
/// examples of any class id in [0, num_classes). Returns the epoch history;
/// the model is left holding the best-validation-accuracy weights.
inline ClassifierHistory train_sign_classifier(SignClassifier& model,
                                               const std::vector<FrameRecord>& train_records,
                                               const std::vector<FrameRecord>& val_records,
                                               const SignTrainConfig& cfg) {
  cfg.validate();
  require(!train_records.empty(), "sign training: empty training split");
  require(!val_records.empty(), "sign training: empty validation split");
  for (const auto* split : {&train_records, &val_records})
    for (const auto& rec : *split)
      require(rec.challenge.kind == ChallengeKind::kNone,
              "sign training: challenged record in split: " + rec.id());

  const std::int64_t num_classes = model.config().num_classes;

  struct Crop {
    Tensor x;  // {1,3,S,S}
    int label = 0;
  };
  auto preload = [&](const std::vector<FrameRecord>& records) {
    std::vector<Crop> out;
    for (const auto& rec : records) {
      const AnnotatedFrame af = rec.load();
      for (const auto& sb : af.signs) {
        require(sb.class_id >= 0 && sb.class_id < num_classes,
                "sign training: class id " + std::to_string(sb.class_id) + " out of range in " +
                    rec.id());
        const std::int64_t side = model.config().input_size;
        out.push_back({model.preprocess_box(af.frame, sb.x, sb.y, sb.w, sb.h)
                           .reshaped({1, 3, side, side}),
                       sb.class_id});
      }
    }
    return out;
  };
  std::vector<Crop> train = preload(train_records);
  std::vector<Crop> val = preload(val_records);
  require(!train.empty(), "sign training: no annotated signs in training split");
  require(!val.empty(), "sign training: no annotated signs in validation split");

  std::set<int> seen;
  for (const Crop& c : train) seen.insert(c.label);
  for (int cls = 0; cls < static_cast<int>(num_classes); ++cls)
    require(seen.count(cls) != 0,
            "sign training: class " + std::to_string(cls) + " has no training examples");

  const auto params = model.params();
  nn::Adam opt(params, cfg.initial_lr);
  nn::PlateauScheduler sched(nn::PlateauScheduler::Mode::kMax, cfg.plateau_factor,
                             cfg.plateau_patience);

  ClassifierHistory history;
  std::vector<Tensor> best_params, best_buffers;
  double best_acc = -1.0;

  const std::int64_t side = model.config().input_size;
  const std::int64_t plane = 3 * side * side;
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng::derive(cfg.rng_seed, "sign_epoch", static_cast<std::uint64_t>(epoch)).shuffle(order);
    const double lr_in_effect = opt.lr();
    double loss_sum = 0.0;
    std::int64_t train_hits = 0;

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::int64_t b = static_cast<std::int64_t>(end - start);
      Tensor batch({b, 3, side, side});
      std::vector<int> labels(static_cast<std::size_t>(b));
      for (std::size_t i = start; i < end; ++i) {
        const Crop& c = train[order[i]];
        std::memcpy(batch.data() + static_cast<std::int64_t>(i - start) * plane, c.x.data(),
                    static_cast<std::size_t>(plane) * sizeof(double));
        labels[i - start] = c.label;
      }
      const Tensor logits = model.forward(batch, /*train=*/true);
      Tensor dlogits;
      loss_sum += nn::cross_entropy(logits, labels, &dlogits) * static_cast<double>(b);
      for (std::int64_t r = 0; r < b; ++r)
        if (detail::logits_argmax(logits, r) == labels[static_cast<std::size_t>(r)]) ++train_hits;
      opt.zero_grad();
      (void)model.backward(dlogits);
      opt.step();
    }

    std::int64_t val_hits = 0;
    for (const Crop& c : val) {
      const Tensor logits = model.forward(c.x, /*train=*/false);
      if (detail::logits_argmax(logits, 0) == c.label) ++val_hits;
    }
    const double val_acc = static_cast<double>(val_hits) / static_cast<double>(val.size());
    const bool reduced = sched.step(val_acc, opt);

    if (val_acc > best_acc) {
      best_acc = val_acc;
      best_params = snapshot_values(params);
      best_buffers = snapshot_values(model.buffers());
    }
    history.epochs.push_back({epoch, lr_in_effect, loss_sum / static_cast<double>(train.size()),
                              static_cast<double>(train_hits) / static_cast<double>(train.size()),
                              val_acc, reduced});
  }

  if (best_acc >= 0.0) {
    restore_values(params, best_params);
    restore_values(model.buffers(), best_buffers);
    history.best_val_accuracy = best_acc;
  }
  return history;
}

}  // namespace tsdr
