#pragma once

#include <map>
#include <optional>
#include <vector>

#include "tsdr/models/challenge_classifier.hpp"
#include "tsdr/models/detector.hpp"
#include "tsdr/models/enhancer.hpp"
#include "tsdr/models/sign_classifier.hpp"

namespace tsdr {

/// Non-owning view over the trained models the inference pipeline needs. The
/// detector is mandatory; the classifier may be omitted when the caller
/// forces the routing; enhancers are looked up per challenge kind; the sign
/// classifier is optional (detections keep class_id = -1 without it).
struct ModelBundle {
  ChallengeClassifier* classifier = nullptr;
  std::map<ChallengeKind, EnhanceNet*> enhancers;
  SignDetector* detector = nullptr;
  SignClassifier* sign_classifier = nullptr;
};

struct PipelineResult {
  ChallengePrediction challenge;  // meaningful only when the classifier ran
  ChallengeKind routed_kind = ChallengeKind::kNone;
  Frame detector_input;  // the enhanced frame, or the raw frame on the bypass path
  Tensor mask;           // {H,W} sign probabilities
  std::vector<Detection> detections;
};

/// Full inference chain: classify the challenge (unless force_kind overrides
/// it), route through the matching enhancer or bypass on "none", segment,
/// extract boxes, and classify each detected crop. With the route forced to
/// "none" this is byte-for-byte the detector-only path.
inline PipelineResult run_pipeline(const Frame& frame, const ModelBundle& models,
                                   std::optional<ChallengeKind> force_kind = std::nullopt) {
  require(models.detector != nullptr, "pipeline: no detector in the model bundle");
  PipelineResult out;
  if (force_kind.has_value()) {
    out.routed_kind = *force_kind;
  } else {
    require(models.classifier != nullptr,
            "pipeline: no challenge classifier in the model bundle and no forced route");
    out.challenge = models.classifier->classify(frame);
    out.routed_kind = out.challenge.kind;
  }

  if (out.routed_kind == ChallengeKind::kNone) {
    out.detector_input = frame;
  } else {
    const auto it = models.enhancers.find(out.routed_kind);
    require(it != models.enhancers.end() && it->second != nullptr,
            "pipeline: no enhancer available for challenge kind '" +
                std::string(to_string(out.routed_kind)) + "'");
    out.detector_input = it->second->enhance(frame);
  }

  out.mask = models.detector->segment(out.detector_input);
  const auto& dcfg = models.detector->config();
  out.detections = mask_to_boxes(out.mask, dcfg.threshold,
                                 dcfg.min_area_for(frame.height(), frame.width()));
  if (models.sign_classifier != nullptr)
    for (Detection& d : out.detections)
      d.class_id = models.sign_classifier->classify_crop(out.detector_input, d);
  return out;
}

}  // namespace tsdr
