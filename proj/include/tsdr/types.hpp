#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tsdr/image.hpp"

namespace tsdr {

/// The six routing classes: challenge-free plus the five handled challenges.
enum class ChallengeKind : int {
  kNone = 0,
  kRain = 1,
  kSnow = 2,
  kHaze = 3,
  kDirtyLens = 4,
  kLensBlur = 5,
};

inline constexpr int kNumChallengeKinds = 6;
inline constexpr std::array<ChallengeKind, 5> kChallengedKinds = {
    ChallengeKind::kRain, ChallengeKind::kSnow, ChallengeKind::kHaze, ChallengeKind::kDirtyLens,
    ChallengeKind::kLensBlur};

inline const char* to_string(ChallengeKind k) {
  switch (k) {
    case ChallengeKind::kNone: return "none";
    case ChallengeKind::kRain: return "rain";
    case ChallengeKind::kSnow: return "snow";
    case ChallengeKind::kHaze: return "haze";
    case ChallengeKind::kDirtyLens: return "dirty_lens";
    case ChallengeKind::kLensBlur: return "lens_blur";
  }
  return "?";
}

inline ChallengeKind challenge_kind_from_string(const std::string& s) {
  for (int i = 0; i < kNumChallengeKinds; ++i) {
    auto k = static_cast<ChallengeKind>(i);
    if (s == to_string(k)) return k;
  }
  throw Error("unknown challenge kind: '" + s + "'");
}

/// Challenge type plus severity. Level 0 is reserved for (and implied by) the
/// challenge-free kind; challenged kinds carry levels 1..5.
struct ChallengeLabel {
  ChallengeKind kind = ChallengeKind::kNone;
  int level = 0;

  void validate() const {
    if (kind == ChallengeKind::kNone)
      require(level == 0, "challenge label: kind 'none' requires level 0");
    else
      require(level >= 1 && level <= 5, "challenge label: level must be in 1..5 for '" +
                                            std::string(to_string(kind)) + "'");
  }

  bool operator==(const ChallengeLabel&) const = default;
};

/// Axis-aligned sign bounding box with a class id. (x,y) is the top-left
/// corner; the box spans [x, x+w) x [y, y+h) in pixel coordinates.
struct SignAnnotation {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t w = 1;
  std::int64_t h = 1;
  int class_id = 0;

  void validate(std::int64_t frame_h, std::int64_t frame_w, int num_classes = -1) const {
    require(w >= 1 && h >= 1, "sign annotation: box extent must be >= 1");
    require(x >= 0 && y >= 0 && x + w <= frame_w && y + h <= frame_h,
            "sign annotation: box [" + std::to_string(x) + "," + std::to_string(y) + "," +
                std::to_string(w) + "," + std::to_string(h) + "] exceeds frame bounds " +
                std::to_string(frame_w) + "x" + std::to_string(frame_h));
    require(class_id >= 0, "sign annotation: negative class id");
    if (num_classes >= 0)
      require(class_id < num_classes, "sign annotation: class id " + std::to_string(class_id) +
                                          " out of range [0," + std::to_string(num_classes) + ")");
  }

  std::int64_t area() const { return w * h; }

  bool operator==(const SignAnnotation&) const = default;
};

/// A frame with its sign annotations, challenge label, and (for challenged
/// training records) the challenge-free counterpart captured from the same
/// viewpoint.
struct AnnotatedFrame {
  Frame frame;
  std::vector<SignAnnotation> signs;
  ChallengeLabel challenge;
  std::optional<Frame> clean_ref;

  void validate(int num_classes = -1, bool training_record = false) const {
    frame.validate();
    challenge.validate();
    for (const auto& s : signs) s.validate(frame.height(), frame.width(), num_classes);
    if (clean_ref) {
      require(clean_ref->height() == frame.height() && clean_ref->width() == frame.width(),
              "annotated frame: clean reference shape differs from frame");
    } else if (training_record && challenge.kind != ChallengeKind::kNone) {
      throw Error("annotated frame: challenged training record lacks a clean reference");
    }
  }
};

enum class SplitName : int { kTrain = 0, kValidation = 1, kTest = 2 };

inline const char* to_string(SplitName s) {
  switch (s) {
    case SplitName::kTrain: return "train";
    case SplitName::kValidation: return "validation";
    case SplitName::kTest: return "test";
  }
  return "?";
}

inline SplitName split_from_string(const std::string& s) {
  if (s == "train") return SplitName::kTrain;
  if (s == "validation" || s == "val") return SplitName::kValidation;
  if (s == "test") return SplitName::kTest;
  throw Error("unknown split name: '" + s + "'");
}

}  // namespace tsdr
