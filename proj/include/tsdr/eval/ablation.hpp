#pragma once

// The ablation ladder: eight method variants of increasing completeness,
// from the bare detector to the full pipeline with tuned loss coupling.
// Each variant is described by which components it trains and which loss
// configuration its enhancer uses; orchestration (training the pieces,
// assembling bundles) lives with the caller.

#include <string>
#include <vector>

#include "tsdr/eval/report.hpp"
#include "tsdr/losses.hpp"

namespace tsdr {

enum class AblationVariant { kA, kB, kC, kD, kE, kF, kG, kH };

inline const std::vector<AblationVariant>& all_ablation_variants() {
  static const std::vector<AblationVariant> v = {
      AblationVariant::kA, AblationVariant::kB, AblationVariant::kC, AblationVariant::kD,
      AblationVariant::kE, AblationVariant::kF, AblationVariant::kG, AblationVariant::kH};
  return v;
}

inline std::string to_string(AblationVariant v) {
  return std::string(1, static_cast<char>('a' + static_cast<int>(v)));
}

inline AblationVariant ablation_variant_from_string(const std::string& s) {
  require(s.size() == 1 && s[0] >= 'a' && s[0] <= 'h',
          "unknown ablation variant: '" + s + "' (expected a..h)");
  return static_cast<AblationVariant>(s[0] - 'a');
}

/// What one ablation variant consists of.
struct AblationSpec {
  AblationVariant variant = AblationVariant::kA;
  bool retrain_detector = false;  // detector trained on challenged + clean frames instead
  bool uses_enhancer = false;
  RegionMode region_mode = RegionMode::kSign;
  bool use_content = false;    // content term active (lambda1 > 0)
  bool use_localizer = false;  // localizer term active (lambda2 > 0)
  bool tuned_coupling = false; // take lambdas from the named preset
  std::string description;
};

inline AblationSpec ablation_spec(AblationVariant v) {
  AblationSpec s;
  s.variant = v;
  switch (v) {
    case AblationVariant::kA:
      s.description = "detector only";
      break;
    case AblationVariant::kB:
      s.retrain_detector = true;
      s.description = "detector retrained on challenged and clean frames";
      break;
    case AblationVariant::kC:
      s.uses_enhancer = true;
      s.region_mode = RegionMode::kFull;
      s.description = "enhancer, whole-frame reconstruction only";
      break;
    case AblationVariant::kD:
      s.uses_enhancer = true;
      s.description = "enhancer, sign-region reconstruction only";
      break;
    case AblationVariant::kE:
      s.uses_enhancer = true;
      s.region_mode = RegionMode::kFull;
      s.use_localizer = true;
      s.description = "enhancer, whole-frame reconstruction and localizer";
      break;
    case AblationVariant::kF:
      s.uses_enhancer = true;
      s.use_localizer = true;
      s.description = "enhancer, sign-region reconstruction and localizer";
      break;
    case AblationVariant::kG:
      s.uses_enhancer = true;
      s.use_content = true;
      s.use_localizer = true;
      s.description = "enhancer, all three terms, unit coupling";
      break;
    case AblationVariant::kH:
      s.uses_enhancer = true;
      s.use_content = true;
      s.use_localizer = true;
      s.tuned_coupling = true;
      s.description = "enhancer, all three terms, tuned coupling";
      break;
  }
  return s;
}

/// Loss weights the variant's enhancer trains with. Inactive terms get a
/// zero coupling factor; active ones couple at 1 unless the tuned preset is
/// requested.
inline LossWeights ablation_loss_weights(const AblationSpec& spec, ChallengeKind kind) {
  if (spec.tuned_coupling) return loss_weights_preset("paper-table-2", kind);
  LossWeights w;
  w.lambda1 = spec.use_content ? 1.0 : 0.0;
  w.lambda2 = spec.use_localizer ? 1.0 : 0.0;
  w.validate();
  return w;
}

/// Evaluate one variant over a record list. Challenged records route through
/// the enhancer of their true kind (ablations isolate enhancement quality, so
/// routing is by ground truth, not by the challenge classifier); detector-only
/// variants force the bypass path everywhere.
inline EvalReport evaluate_ablation_variant(const std::string& name, const AblationSpec& spec,
                                            const std::vector<FrameRecord>& records,
                                            const ModelBundle& models) {
  return evaluate_records(name, records, [&](const AnnotatedFrame& af) {
    const ChallengeKind route = spec.uses_enhancer ? af.challenge.kind : ChallengeKind::kNone;
    return run_pipeline(af.frame, models, route);
  });
}

}  // namespace tsdr
