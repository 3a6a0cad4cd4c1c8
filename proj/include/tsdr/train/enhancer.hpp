#pragma once

// Enhancement-network training. Each optimiser step consumes one batch from
// every severity level of the configured challenge (gradient accumulation
// across the five levels), the loss is the composite of region-restricted
// reconstruction, feature-space content agreement, and the frozen detector's
// overlap feedback, and model selection follows validation loss on full
// frames.

#include <array>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tsdr/losses.hpp"
#include "tsdr/manifest.hpp"
#include "tsdr/mask.hpp"
#include "tsdr/models/detector.hpp"
#include "tsdr/models/enhancer.hpp"
#include "tsdr/patch.hpp"
#include "tsdr/train/common.hpp"

namespace tsdr {

struct EnhancerTrainConfig {
  ChallengeKind kind = ChallengeKind::kRain;
  std::int64_t patch_size = 64;
  std::int64_t batch_size = 1;
  int accumulation_group = 5;  // one batch per severity level, always five
  std::int64_t epochs = 35;
  double initial_lr = 1e-3;
  int plateau_patience = 3;
  double plateau_factor = 0.5;
  RegionMode region_mode = RegionMode::kSign;
  std::uint64_t rng_seed = 0;

  void validate() const {
    require(kind != ChallengeKind::kNone, "enhancer training: kind must be a real challenge");
    require(patch_size >= 16, "enhancer training: patch_size must be >= 16");
    require(batch_size >= 1, "enhancer training: batch_size must be >= 1");
    require(accumulation_group == 5,
            "enhancer training: accumulation_group must equal the five severity levels");
    require(epochs >= 0, "enhancer training: epochs must be >= 0");
    require(initial_lr > 0.0, "enhancer training: initial_lr must be positive");
    require(plateau_patience >= 1, "enhancer training: plateau_patience must be >= 1");
    require(plateau_factor > 0.0 && plateau_factor < 1.0,
            "enhancer training: plateau_factor must lie in (0,1)");
  }
};

/// One training example: a challenged view, the matching clean view of the
/// same window, and the window-local sign boxes.
struct GroupSample {
  Frame challenged;
  Frame clean;
  std::vector<SignAnnotation> signs;
};

/// Composite loss of a single example. Always reports all three components;
/// when with_grad is set, d(l_total)/d(params) is accumulated into the
/// enhancement network's parameter gradients. Component gradients are only
/// propagated where their coupling factor is non-zero. The detector must be
/// frozen; its own parameter gradients are scratch that no optimiser reads.
inline LossBundle enhancer_example_loss(EnhanceNet& net, SignDetector& detector,
                                        FeatureExtractor& phi, const GroupSample& sample,
                                        const LossWeights& weights, RegionMode mode,
                                        bool with_grad = false) {
  weights.validate();
  detector.assert_frozen();
  const std::int64_t h = sample.challenged.height(), w = sample.challenged.width();
  require(sample.clean.height() == h && sample.clean.width() == w,
          "enhancer loss: challenged and clean frame shapes differ");
  const RegionSpec region = mode == RegionMode::kSign ? RegionSpec(sample.signs, h, w)
                                                      : RegionSpec::full_frame(h, w);

  const Tensor r4 = net.forward(sample.challenged.pixels.reshaped({1, 3, h, w}), with_grad);
  Frame rec;
  rec.pixels = r4.reshaped({3, h, w});

  LossBundle out;
  Tensor d_total, d_part;
  out.l_enhance_sign = masked_mae(rec, sample.clean, region, with_grad ? &d_total : nullptr);

  const bool grad_content = with_grad && weights.lambda1 > 0.0;
  out.l_content_sign =
      content_loss(rec, sample.clean, region, phi, grad_content ? &d_part : nullptr);
  if (grad_content) {
    d_part *= weights.lambda1;
    d_total += d_part;
  }

  const bool grad_loc = with_grad && weights.lambda2 > 0.0;
  const Tensor gt = rasterize_mask(sample.signs, h, w);
  const Tensor p4 = detector.forward(r4, grad_loc);
  Tensor dp;
  out.l_localizer = tversky_l1_loss(p4.reshaped({h, w}), gt, weights, grad_loc ? &dp : nullptr);
  if (grad_loc) {
    dp *= weights.lambda2;
    d_total += detector.backward(dp.reshaped({1, 1, h, w})).reshaped({3, h, w});
  }

  out.l_total = out.l_enhance_sign + weights.lambda1 * out.l_content_sign +
                weights.lambda2 * out.l_localizer;
  if (with_grad) (void)net.backward(d_total.reshaped({1, 3, h, w}));
  return out;
}

struct EnhancerEpochStats {
  std::int64_t epoch = 0;
  double lr = 0.0;
  double l_enhance = 0.0;
  double l_content = 0.0;
  double l_localizer = 0.0;
  double l_total = 0.0;
  double val_total = 0.0;
};

struct EnhancerHistory {
  std::vector<EnhancerEpochStats> epochs;
  double best_val_total = 0.0;

  std::string to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "epoch,lr,l_enhance,l_content,l_localizer,l_total,val_total\n";
    for (const auto& e : epochs)
      out << e.epoch << ',' << e.lr << ',' << e.l_enhance << ',' << e.l_content << ','
          << e.l_localizer << ',' << e.l_total << ',' << e.val_total << '\n';
    return out.str();
  }
};

/// Train one per-challenge enhancer. Training pools are the records of the
/// configured kind split by severity level; every level must be represented.
/// Each group takes one batch of sign-anchored patch pairs per level,
/// accumulates the summed gradients, and applies a single optimiser step.
/// Validation is the mean composite loss over full frames of the kind in the
/// validation split; the lowest-validation weights are restored at the end.
inline EnhancerHistory train_enhancer(EnhanceNet& net, SignDetector& detector,
                                      FeatureExtractor& phi,
                                      const std::vector<FrameRecord>& train_records,
                                      const std::vector<FrameRecord>& val_records,
                                      const EnhancerTrainConfig& cfg,
                                      const LossWeights& weights) {
  cfg.validate();
  weights.validate();
  require(detector.frozen(), "enhancer training: detector must be frozen first");
  const std::uint64_t detector_checksum = detector.weights_checksum();

  // Per-level training pools. Other kinds are ignored; a matching record
  // without a clean reference is a data error; sign-free matching records
  // cannot anchor a patch and are skipped.
  std::array<std::vector<AnnotatedFrame>, 5> pools;
  for (const auto& rec : train_records) {
    if (rec.challenge.kind != cfg.kind) continue;
    require(rec.has_clean_ref, "enhancer training: record lacks clean reference: " + rec.id());
    if (rec.signs.empty()) continue;
    pools[static_cast<std::size_t>(rec.challenge.level - 1)].push_back(rec.load());
  }
  for (int l = 1; l <= 5; ++l)
    require(!pools[static_cast<std::size_t>(l - 1)].empty(),
            "enhancer training: no level-" + std::to_string(l) + " '" +
                std::string(to_string(cfg.kind)) + "' examples in training split");

  std::vector<GroupSample> val_samples;
  for (const auto& rec : val_records) {
    if (rec.challenge.kind != cfg.kind) continue;
    require(rec.has_clean_ref, "enhancer training: record lacks clean reference: " + rec.id());
    if (rec.signs.empty()) continue;
    AnnotatedFrame af = rec.load();
    val_samples.push_back({std::move(af.frame), std::move(*af.clean_ref), std::move(af.signs)});
  }
  require(!val_samples.empty(), "enhancer training: no '" + std::string(to_string(cfg.kind)) +
                                    "' examples in validation split");

  const auto params = net.params();
  nn::Adam opt(params, cfg.initial_lr);
  nn::PlateauScheduler sched(nn::PlateauScheduler::Mode::kMin, cfg.plateau_factor,
                             cfg.plateau_patience);

  // The smallest level pool bounds the number of groups per epoch; batch
  // indices wrap within a level so larger pools still cycle their examples.
  std::int64_t groups = std::numeric_limits<std::int64_t>::max();
  for (const auto& pool : pools) {
    const auto n = static_cast<std::int64_t>(pool.size());
    groups = std::min(groups, (n + cfg.batch_size - 1) / cfg.batch_size);
  }

  EnhancerHistory history;
  std::vector<Tensor> best_params, best_buffers;
  double best_val = 0.0;
  bool have_best = false;

  std::array<std::vector<std::size_t>, 5> order;
  for (std::size_t l = 0; l < 5; ++l) {
    order[l].resize(pools[l].size());
    for (std::size_t i = 0; i < order[l].size(); ++i) order[l][i] = i;
  }

  for (std::int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t l = 0; l < 5; ++l)
      Rng::derive(cfg.rng_seed, "enhancer_epoch", static_cast<std::uint64_t>(epoch),
                  static_cast<std::uint64_t>(l + 1))
          .shuffle(order[l]);
    const double lr_in_effect = opt.lr();
    EnhancerEpochStats row;
    row.epoch = epoch;
    row.lr = lr_in_effect;
    std::int64_t examples = 0;

    for (std::int64_t g = 0; g < groups; ++g) {
      opt.zero_grad();
      for (std::size_t l = 0; l < 5; ++l) {
        const std::size_t n = pools[l].size();
        for (std::int64_t b = 0; b < cfg.batch_size; ++b) {
          const std::size_t idx =
              order[l][static_cast<std::size_t>(g * cfg.batch_size + b) % n];
          const std::uint64_t crop_seed =
              Rng::derive(cfg.rng_seed, "enhancer_crop", static_cast<std::uint64_t>(epoch),
                          static_cast<std::uint64_t>(g), static_cast<std::uint64_t>(l + 1),
                          static_cast<std::uint64_t>(b))
                  .next_u64();
          PatchPair pp = crop_sign_patch(pools[l][idx], cfg.patch_size, crop_seed);
          const GroupSample sample{std::move(pp.challenged), std::move(pp.clean),
                                   std::move(pp.signs)};
          const LossBundle lb = enhancer_example_loss(net, detector, phi, sample, weights,
                                                      cfg.region_mode, /*with_grad=*/true);
          row.l_enhance += lb.l_enhance_sign;
          row.l_content += lb.l_content_sign;
          row.l_localizer += lb.l_localizer;
          row.l_total += lb.l_total;
          ++examples;
        }
      }
      opt.step();
    }

    row.l_enhance /= static_cast<double>(examples);
    row.l_content /= static_cast<double>(examples);
    row.l_localizer /= static_cast<double>(examples);
    row.l_total /= static_cast<double>(examples);

    double val_sum = 0.0;
    for (const GroupSample& s : val_samples)
      val_sum += enhancer_example_loss(net, detector, phi, s, weights, cfg.region_mode).l_total;
    row.val_total = val_sum / static_cast<double>(val_samples.size());
    sched.step(row.val_total, opt);

    if (!have_best || row.val_total < best_val) {
      have_best = true;
      best_val = row.val_total;
      best_params = snapshot_values(params);
      best_buffers = snapshot_values(net.buffers());
    }
    history.epochs.push_back(row);
  }

  if (have_best) {
    restore_values(params, best_params);
    restore_values(net.buffers(), best_buffers);
    history.best_val_total = best_val;
  }
  require(detector.weights_checksum() == detector_checksum,
          "enhancer training: frozen detector weights changed during training");
  return history;
}

}  // namespace tsdr
