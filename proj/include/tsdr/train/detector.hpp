#pragma once

// Sign-detector training: overlap loss (soft set agreement + L1) against
// rasterized ground-truth masks on challenge-free frames only. The detector
// is frozen when training finishes; every later consumer treats it as
// immutable.

#include <sstream>
#include <string>
#include <vector>

#include "tsdr/losses.hpp"
#include "tsdr/manifest.hpp"
#include "tsdr/mask.hpp"
#include "tsdr/models/detector.hpp"
#include "tsdr/train/common.hpp"

namespace tsdr {

struct DetectorTrainConfig {
  std::int64_t batch_size = 8;
  std::int64_t epochs = 12;
  double initial_lr = 1e-3;
  int plateau_patience = 3;
  double plateau_factor = 0.5;
  std::uint64_t rng_seed = 0;
  // The detector normally trains on challenge-free frames only; the
  // retrained-detector study variant flips this to admit challenged frames.
  bool allow_challenged = false;

  void validate() const {
    require(batch_size >= 1, "detector training: batch_size must be >= 1");
    require(epochs >= 0, "detector training: epochs must be >= 0");
    require(initial_lr > 0.0, "detector training: initial_lr must be positive");
    require(plateau_patience >= 1, "detector training: plateau_patience must be >= 1");
    require(plateau_factor > 0.0 && plateau_factor < 1.0,
            "detector training: plateau_factor must lie in (0,1)");
  }
};

struct DetectorEpochStats {
  std::int64_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  bool lr_reduced = false;
};

struct DetectorHistory {
  std::vector<DetectorEpochStats> epochs;
  double best_val_loss = 0.0;

  std::string to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "epoch,lr,train_loss,val_loss,lr_reduced\n";
    for (const auto& e : epochs)
      out << e.epoch << ',' << e.lr << ',' << e.train_loss << ',' << e.val_loss << ','
          << (e.lr_reduced ? 1 : 0) << '\n';
    return out.str();
  }
};

/// Train the segmentation detector on challenge-free records (a challenged
/// record anywhere in either split is an error), select the lowest
/// validation-loss weights, and freeze the model. The loss-weights argument
/// supplies the overlap loss's alpha/beta/gamma; its coupling factors are
/// ignored here.
inline DetectorHistory train_detector(SignDetector& model,
                                      const std::vector<FrameRecord>& train_records,
                                      const std::vector<FrameRecord>& val_records,
                                      const DetectorTrainConfig& cfg,
                                      const LossWeights& loss_weights = {}) {
  cfg.validate();
  loss_weights.validate();
  require(!train_records.empty(), "detector training: empty training split");
  require(!val_records.empty(), "detector training: empty validation split");
  if (!cfg.allow_challenged)
    for (const auto* split : {&train_records, &val_records})
      for (const auto& rec : *split)
        require(rec.challenge.kind == ChallengeKind::kNone,
                "detector training: challenged record in split: " + rec.id());

  struct Sample {
    Tensor x;   // {1,3,H,W}
    Tensor gt;  // {H,W}
  };
  auto preload = [](const std::vector<FrameRecord>& records) {
    std::vector<Sample> out;
    out.reserve(records.size());
    for (const auto& rec : records) {
      const AnnotatedFrame af = rec.load();
      const std::int64_t h = af.frame.height(), w = af.frame.width();
      out.push_back({af.frame.pixels.reshaped({1, 3, h, w}), rasterize_mask(af.signs, h, w)});
    }
    return out;
  };
  std::vector<Sample> train = preload(train_records);
  std::vector<Sample> val = preload(val_records);

  const auto params = model.params();
  nn::Adam opt(params, cfg.initial_lr);
  nn::PlateauScheduler sched(nn::PlateauScheduler::Mode::kMin, cfg.plateau_factor,
                             cfg.plateau_patience);

  DetectorHistory history;
  std::vector<Tensor> best_params;
  double best_val = 0.0;
  bool have_best = false;

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng::derive(cfg.rng_seed, "detector_epoch", static_cast<std::uint64_t>(epoch)).shuffle(order);
    const double lr_in_effect = opt.lr();
    double loss_sum = 0.0;

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const double inv_b = 1.0 / static_cast<double>(end - start);
      opt.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const Sample& smp = train[order[i]];
        const std::int64_t h = smp.gt.dim(0), w = smp.gt.dim(1);
        const Tensor probs4 = model.forward(smp.x, /*train=*/true);
        Tensor dp;
        loss_sum += tversky_l1_loss(probs4.reshaped({h, w}), smp.gt, loss_weights, &dp);
        dp *= inv_b;  // batch loss is the mean over its samples
        (void)model.backward(dp.reshaped({1, 1, h, w}));
      }
      opt.step();
    }

    double val_sum = 0.0;
    for (const Sample& smp : val) {
      const std::int64_t h = smp.gt.dim(0), w = smp.gt.dim(1);
      const Tensor probs4 = model.forward(smp.x, /*train=*/false);
      val_sum += tversky_l1_loss(probs4.reshaped({h, w}), smp.gt, loss_weights);
    }
    const double val_loss = val_sum / static_cast<double>(val.size());
    const bool reduced = sched.step(val_loss, opt);

    if (!have_best || val_loss < best_val) {
      have_best = true;
      best_val = val_loss;
      best_params = snapshot_values(params);
    }
    history.epochs.push_back(
        {epoch, lr_in_effect, loss_sum / static_cast<double>(train.size()), val_loss, reduced});
  }

  if (have_best) {
    restore_values(params, best_params);
    history.best_val_loss = best_val;
  }
  model.freeze();
  return history;
}

}  // namespace tsdr
