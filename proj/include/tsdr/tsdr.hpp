#pragma once

// Umbrella header: the whole library in one include.

#include "tsdr/checkpoint.hpp"
#include "tsdr/common.hpp"
#include "tsdr/eval/ablation.hpp"
#include "tsdr/eval/matching.hpp"
#include "tsdr/eval/pipeline.hpp"
#include "tsdr/eval/report.hpp"
#include "tsdr/eval/ssim.hpp"
#include "tsdr/image.hpp"
#include "tsdr/losses.hpp"
#include "tsdr/manifest.hpp"
#include "tsdr/mask.hpp"
#include "tsdr/models/challenge_classifier.hpp"
#include "tsdr/models/detector.hpp"
#include "tsdr/models/enhancer.hpp"
#include "tsdr/models/sign_classifier.hpp"
#include "tsdr/patch.hpp"
#include "tsdr/plot.hpp"
#include "tsdr/png_io.hpp"
#include "tsdr/rng.hpp"
#include "tsdr/synth/challenge.hpp"
#include "tsdr/synth/scene.hpp"
#include "tsdr/tensor.hpp"
#include "tsdr/train/classifier.hpp"
#include "tsdr/train/common.hpp"
#include "tsdr/train/detector.hpp"
#include "tsdr/train/enhancer.hpp"
#include "tsdr/train/sign_classifier.hpp"
#include "tsdr/types.hpp"
