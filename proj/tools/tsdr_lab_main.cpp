// tsdr-lab: command-line laboratory for the traffic-sign detection and
// restoration pipeline. One subcommand per stage: corpus synthesis, the four
// trainers, evaluation, single-image inference, the variant study, and the
// degradation report. Every run leaves a run_manifest.json (tool version,
// effective configuration, seed, artifact digests) plus a replayable
// run_config.ini under its output directory.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tsdr/tsdr.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string default_out_root() {
  const char* env = std::getenv("TSDR_LAB_OUT");
  return (env != nullptr && *env != '\0') ? std::string(env) : std::string("tsdr-out");
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : csv) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<tsdr::ChallengeKind> parse_kind_list(const std::string& csv) {
  std::vector<tsdr::ChallengeKind> kinds;
  for (const std::string& tok : split_list(csv)) {
    const tsdr::ChallengeKind k = tsdr::challenge_kind_from_string(tok);
    tsdr::require(k != tsdr::ChallengeKind::kNone,
                  "kind list: 'none' is implicit and cannot be requested");
    if (std::find(kinds.begin(), kinds.end(), k) == kinds.end()) kinds.push_back(k);
  }
  tsdr::require(!kinds.empty(), "kind list: no challenge kinds given");
  return kinds;
}

std::vector<int> parse_level_list(const std::string& csv) {
  std::vector<int> levels;
  for (const std::string& tok : split_list(csv)) {
    const int l = std::stoi(tok);
    tsdr::require(l >= 1 && l <= 5, "level list: levels must lie in 1..5");
    if (std::find(levels.begin(), levels.end(), l) == levels.end()) levels.push_back(l);
  }
  tsdr::require(!levels.empty(), "level list: no levels given");
  return levels;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  tsdr::require(static_cast<bool>(in), "cannot read artifact for digest: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();
  return hex64(tsdr::fnv1a64(bytes.data(), bytes.size()));
}

std::string sanitized(const std::string& id) {
  std::string out = id;
  for (char& c : out)
    if (c == '#' || c == '/' || c == '\\') c = '_';
  return out;
}

/// Output-directory bookkeeping: resolves paths, tracks written artifacts,
/// and emits the closing run manifest.
class RunContext {
 public:
  explicit RunContext(std::string root) : root_(std::move(root)) {
    fs::create_directories(root_);
  }

  const std::string& root() const { return root_; }

  std::string path(const std::string& rel) {
    const fs::path p = fs::path(root_) / rel;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    return p.string();
  }

  void note(const std::string& rel) { artifacts_.emplace_back(rel, file_digest(path(rel))); }

  void write_text(const std::string& rel, const std::string& content) {
    tsdr::write_text_file(path(rel), content);
    note(rel);
  }

  /// Write run_config.ini (replayable via --config) and run_manifest.json.
  /// `sub` is the invoked subcommand; only its section is emitted so the
  /// file replays cleanly.
  void finish(const CLI::App& sub, const std::string& command,
              std::optional<std::uint64_t> seed) {
    write_text("run_config.ini", "[" + command + "]\n" + sub.config_to_str(true, true));
    json manifest;
    manifest["tool"] = "tsdr-lab";
    manifest["version"] = tsdr::kVersion;
    manifest["command"] = command;
    if (seed.has_value()) manifest["seed"] = *seed;
    manifest["config_ini"] = "run_config.ini";
    json arts = json::object();
    for (const auto& [rel, digest] : artifacts_) arts[rel] = digest;
    manifest["artifacts"] = arts;
    tsdr::write_text_file(path("run_manifest.json"), manifest.dump(2) + "\n");
  }

 private:
  std::string root_;
  std::vector<std::pair<std::string, std::string>> artifacts_;
};

const std::vector<tsdr::FrameRecord>& split_of(const tsdr::DatasetSplits& splits,
                                               tsdr::SplitName name) {
  static const std::vector<tsdr::FrameRecord> empty;
  const auto it = splits.find(name);
  return it == splits.end() ? empty : it->second.records;
}

tsdr::SplitName split_from_string(const std::string& s) {
  if (s == "train") return tsdr::SplitName::kTrain;
  if (s == "validation") return tsdr::SplitName::kValidation;
  if (s == "test") return tsdr::SplitName::kTest;
  throw tsdr::Error("unknown split: '" + s + "' (expected train, validation, or test)");
}

std::vector<tsdr::FrameRecord> clean_only(const std::vector<tsdr::FrameRecord>& records) {
  std::vector<tsdr::FrameRecord> out;
  for (const auto& r : records)
    if (r.challenge.kind == tsdr::ChallengeKind::kNone) out.push_back(r);
  return out;
}

std::vector<tsdr::FrameRecord> restricted_to(const std::vector<tsdr::FrameRecord>& records,
                                             const std::vector<tsdr::ChallengeKind>& kinds) {
  std::vector<tsdr::FrameRecord> out;
  for (const auto& r : records)
    if (r.challenge.kind == tsdr::ChallengeKind::kNone ||
        std::find(kinds.begin(), kinds.end(), r.challenge.kind) != kinds.end())
      out.push_back(r);
  return out;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthOpts {
  std::string out = default_out_root();
  std::uint64_t seed = 0;
  std::int64_t n_train = 130, n_val = 52, n_test = 52;
  std::int64_t size = 64;
  int classes = 14;
  std::int64_t clean_every = 2;
  std::string kinds = "rain,snow,haze,dirty_lens,lens_blur";
  std::string levels = "1,2,3,4,5";
};

void run_synth(const CLI::App& app, const SynthOpts& o) {
  RunContext ctx(o.out);
  const auto kinds = parse_kind_list(o.kinds);
  const auto levels = parse_level_list(o.levels);
  tsdr::require(o.clean_every >= 1, "synth: --clean-every must be >= 1");

  tsdr::SceneConfig sc;
  sc.height = o.size;
  sc.width = o.size;
  sc.num_sign_classes = o.classes;
  sc.validate();

  // Every clean_every-th record stays clean; the rest cycle through the
  // (kind x level) grid in order, so a split with at least
  // kinds*levels*clean_every/(clean_every-1) records covers every cell.
  const std::int64_t cells = static_cast<std::int64_t>(kinds.size() * levels.size());
  std::ostringstream manifest;
  std::int64_t written_clean = 0, written_challenged = 0;
  std::vector<bool> class_seen(static_cast<std::size_t>(o.classes), false);

  const auto emit_clean = [&](const std::string& id, tsdr::SplitName split,
                              const tsdr::AnnotatedFrame& clean) {
    const std::string split_name = tsdr::to_string(split);
    const std::string img_rel = "images/" + split_name + "/" + id + ".png";
    tsdr::write_png(ctx.path(img_rel), clean.frame);
    ctx.note(img_rel);
    manifest << tsdr::manifest_line(id, 0, split, img_rel, "", clean.challenge, clean.signs)
             << '\n';
    ++written_clean;
    if (split == tsdr::SplitName::kTrain)
      for (const auto& s : clean.signs) class_seen[static_cast<std::size_t>(s.class_id)] = true;
  };

  const std::array<std::pair<tsdr::SplitName, std::int64_t>, 3> plan = {
      {{tsdr::SplitName::kTrain, o.n_train},
       {tsdr::SplitName::kValidation, o.n_val},
       {tsdr::SplitName::kTest, o.n_test}}};
  for (const auto& [split, count] : plan) {
    tsdr::require(count >= 0, "synth: split sizes must be >= 0");
    const std::string split_name = tsdr::to_string(split);
    std::int64_t challenged_in_split = 0;
    for (std::int64_t i = 0; i < count; ++i) {
      std::ostringstream idbuf;
      idbuf << split_name << '-' << std::setw(4) << std::setfill('0') << i;
      const std::string id = idbuf.str();
      sc.video_id = id;
      const std::uint64_t scene_seed =
          tsdr::Rng::derive(o.seed, "synth-scene", split_name, static_cast<std::uint64_t>(i))
              .next_u64();
      const tsdr::AnnotatedFrame clean = tsdr::synth_scene(scene_seed, sc);

      if (i % o.clean_every == 0) {
        emit_clean(id, split, clean);
      } else {
        const std::int64_t cell = challenged_in_split++ % cells;
        const auto kind = kinds[static_cast<std::size_t>(cell / levels.size())];
        const int level = levels[static_cast<std::size_t>(cell % levels.size())];
        const std::uint64_t ch_seed =
            tsdr::Rng::derive(o.seed, "synth-challenge", split_name,
                              static_cast<std::uint64_t>(i))
                .next_u64();
        const tsdr::AnnotatedFrame ch = tsdr::challenge_scene(clean, {kind, level}, ch_seed);
        const std::string img_rel = "images/" + split_name + "/" + id + ".png";
        const std::string clean_rel = "images/" + split_name + "/" + id + "_clean.png";
        tsdr::write_png(ctx.path(img_rel), ch.frame);
        ctx.note(img_rel);
        tsdr::write_png(ctx.path(clean_rel), *ch.clean_ref);
        ctx.note(clean_rel);
        manifest << tsdr::manifest_line(id, 0, split, img_rel, clean_rel, ch.challenge, ch.signs)
                 << '\n';
        ++written_challenged;
      }
    }
  }

  // Guarantee the sign-classifier contract: every sign class gets at least
  // one clean training example. Extra clean scenes are appended until the
  // vocabulary is covered (deterministic, bounded).
  std::int64_t extra = 0;
  while (std::find(class_seen.begin(), class_seen.end(), false) != class_seen.end()) {
    tsdr::require(extra < 500,
                  "synth: could not cover every sign class with clean training frames; "
                  "increase --train or lower --classes");
    std::ostringstream idbuf;
    idbuf << "train-x" << std::setw(4) << std::setfill('0') << extra;
    const std::string id = idbuf.str();
    sc.video_id = id;
    const std::uint64_t scene_seed =
        tsdr::Rng::derive(o.seed, "synth-extra", static_cast<std::uint64_t>(extra)).next_u64();
    emit_clean(id, tsdr::SplitName::kTrain, tsdr::synth_scene(scene_seed, sc));
    ++extra;
  }

  ctx.write_text("manifest.jsonl", manifest.str());
  ctx.finish(app, "synth", o.seed);
  std::cout << "wrote " << written_clean << " clean and " << written_challenged
            << " challenged frames under " << ctx.root() << "\n";
}

// ---------------------------------------------------------------------------
// train-classifier
// ---------------------------------------------------------------------------

struct TrainClassifierOpts {
  std::string out = default_out_root();
  std::string manifest;
  std::uint64_t seed = 0;
  std::int64_t input_size = 64;
  double width_scale = 0.25;
  std::int64_t epochs = 6;
  std::int64_t batch = 16;
  double lr = 1e-3;
};

void run_train_classifier(const CLI::App& app, const TrainClassifierOpts& o) {
  RunContext ctx(o.out);
  const auto splits = tsdr::load_dataset(o.manifest);
  const auto& train = split_of(splits, tsdr::SplitName::kTrain);
  const auto& val = split_of(splits, tsdr::SplitName::kValidation);

  tsdr::ClassifierConfig mc;
  mc.input_size = o.input_size;
  mc.width_scale = o.width_scale;
  mc.seed = tsdr::Rng::derive(o.seed, "classifier-init").next_u64();
  tsdr::ChallengeClassifier model(mc);

  tsdr::ClassifierTrainConfig tc;
  tc.batch_size = o.batch;
  tc.epochs = o.epochs;
  tc.initial_lr = o.lr;
  tc.rng_seed = tsdr::Rng::derive(o.seed, "classifier-train").next_u64();
  const tsdr::ClassifierHistory hist = tsdr::train_challenge_classifier(model, train, val, tc);

  tsdr::save_challenge_classifier(ctx.path("classifier.ckpt"), model);
  ctx.note("classifier.ckpt");
  ctx.write_text("classifier_history.csv", hist.to_csv());

  const auto cm = tsdr::confusion_matrix(model, val);
  std::ostringstream cmcsv;
  cmcsv << "true\\pred";
  for (int j = 0; j < tsdr::kNumChallengeKinds; ++j)
    cmcsv << ',' << tsdr::to_string(static_cast<tsdr::ChallengeKind>(j));
  cmcsv << '\n';
  for (int i = 0; i < tsdr::kNumChallengeKinds; ++i) {
    cmcsv << tsdr::to_string(static_cast<tsdr::ChallengeKind>(i));
    for (int j = 0; j < tsdr::kNumChallengeKinds; ++j)
      cmcsv << ',' << cm[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    cmcsv << '\n';
  }
  ctx.write_text("classifier_confusion.csv", cmcsv.str());

  ctx.finish(app, "train-classifier", o.seed);
  std::cout << "classifier best validation accuracy " << hist.best_val_accuracy << "\n";
}

// ---------------------------------------------------------------------------
// train-detector
// ---------------------------------------------------------------------------

struct TrainDetectorOpts {
  std::string out = default_out_root();
  std::string manifest;
  std::uint64_t seed = 0;
  std::int64_t epochs = 12;
  std::int64_t batch = 8;
  double lr = 1e-3;
  std::int64_t base_channels = 8;
  double threshold = 0.5;
  bool include_challenged = false;
  double alpha = 0.5, beta = 0.5, gamma = 1.0;
};

void run_train_detector(const CLI::App& app, const TrainDetectorOpts& o) {
  RunContext ctx(o.out);
  const auto splits = tsdr::load_dataset(o.manifest);
  std::vector<tsdr::FrameRecord> train = split_of(splits, tsdr::SplitName::kTrain);
  std::vector<tsdr::FrameRecord> val = split_of(splits, tsdr::SplitName::kValidation);
  if (!o.include_challenged) {
    train = clean_only(train);
    val = clean_only(val);
  }

  tsdr::DetectorConfig mc;
  mc.base_channels = o.base_channels;
  mc.threshold = o.threshold;
  mc.seed = tsdr::Rng::derive(o.seed, "detector-init").next_u64();
  tsdr::SignDetector model(mc);

  tsdr::DetectorTrainConfig tc;
  tc.batch_size = o.batch;
  tc.epochs = o.epochs;
  tc.initial_lr = o.lr;
  tc.allow_challenged = o.include_challenged;
  tc.rng_seed = tsdr::Rng::derive(o.seed, "detector-train").next_u64();
  tsdr::LossWeights lw;
  lw.alpha = o.alpha;
  lw.beta = o.beta;
  lw.gamma = o.gamma;
  const tsdr::DetectorHistory hist = tsdr::train_detector(model, train, val, tc, lw);

  tsdr::save_detector(ctx.path("detector.ckpt"), model);
  ctx.note("detector.ckpt");
  ctx.write_text("detector_history.csv", hist.to_csv());
  ctx.finish(app, "train-detector", o.seed);
  std::cout << "detector best validation loss " << hist.best_val_loss << " (frozen)\n";
}

// ---------------------------------------------------------------------------
// train-sign-classifier
// ---------------------------------------------------------------------------

struct TrainSignOpts {
  std::string out = default_out_root();
  std::string manifest;
  std::uint64_t seed = 0;
  std::int64_t epochs = 10;
  std::int64_t batch = 16;
  double lr = 1e-3;
  std::int64_t input_size = 16;
  int classes = 14;
};

void run_train_sign_classifier(const CLI::App& app, const TrainSignOpts& o) {
  RunContext ctx(o.out);
  const auto splits = tsdr::load_dataset(o.manifest, o.classes);
  const auto train = clean_only(split_of(splits, tsdr::SplitName::kTrain));
  const auto val = clean_only(split_of(splits, tsdr::SplitName::kValidation));

  tsdr::SignClassifierConfig mc;
  mc.num_classes = o.classes;
  mc.input_size = o.input_size;
  mc.seed = tsdr::Rng::derive(o.seed, "sign-init").next_u64();
  tsdr::SignClassifier model(mc);

  tsdr::SignTrainConfig tc;
  tc.batch_size = o.batch;
  tc.epochs = o.epochs;
  tc.initial_lr = o.lr;
  tc.rng_seed = tsdr::Rng::derive(o.seed, "sign-train").next_u64();
  const tsdr::ClassifierHistory hist = tsdr::train_sign_classifier(model, train, val, tc);

  tsdr::save_sign_classifier(ctx.path("sign_classifier.ckpt"), model);
  ctx.note("sign_classifier.ckpt");
  ctx.write_text("sign_classifier_history.csv", hist.to_csv());
  ctx.finish(app, "train-sign-classifier", o.seed);
  std::cout << "sign classifier best validation accuracy " << hist.best_val_accuracy << "\n";
}

// ---------------------------------------------------------------------------
// train-enhancer
// ---------------------------------------------------------------------------

struct TrainEnhancerOpts {
  std::string out = default_out_root();
  std::string manifest;
  std::string detector_ckpt;
  std::string sign_classifier_ckpt;
  std::uint64_t seed = 0;
  std::string kind = "rain";
  std::string preset;
  double lambda1 = 1.0, lambda2 = 1.0, alpha = 0.5, beta = 0.5, gamma = 1.0;
  std::string region = "sign";
  std::int64_t patch = 64;
  std::int64_t epochs = 8;
  std::int64_t batch = 1;
  double lr = 1e-3;
  std::int64_t base_channels = 8;
  int blocks = 2;
};

void run_train_enhancer(const CLI::App& app, const TrainEnhancerOpts& o) {
  RunContext ctx(o.out);
  const tsdr::ChallengeKind kind = tsdr::challenge_kind_from_string(o.kind);
  tsdr::require(kind != tsdr::ChallengeKind::kNone,
                "train-enhancer: kind must be one of the five challenges");

  tsdr::LossWeights weights;
  if (!o.preset.empty()) {
    weights = tsdr::loss_weights_preset(o.preset, kind);
  } else {
    weights.lambda1 = o.lambda1;
    weights.lambda2 = o.lambda2;
    weights.alpha = o.alpha;
    weights.beta = o.beta;
    weights.gamma = o.gamma;
    weights.validate();
  }

  const auto splits = tsdr::load_dataset(o.manifest);
  const auto& train = split_of(splits, tsdr::SplitName::kTrain);
  const auto& val = split_of(splits, tsdr::SplitName::kValidation);

  tsdr::SignDetector detector = tsdr::load_detector(o.detector_ckpt);
  tsdr::require(detector.frozen(),
                "train-enhancer: detector checkpoint is not frozen: " + o.detector_ckpt);

  // The feature-space loss runs through the sign classifier's early stages;
  // without that checkpoint the content term must be switched off.
  std::unique_ptr<tsdr::SignClassifier> sign_model;
  std::unique_ptr<tsdr::FeatureExtractor> phi;
  if (!o.sign_classifier_ckpt.empty()) {
    sign_model = std::make_unique<tsdr::SignClassifier>(
        tsdr::load_sign_classifier(o.sign_classifier_ckpt));
    phi = std::make_unique<tsdr::SignNetFeatures>(*sign_model);
  } else {
    tsdr::require(weights.lambda1 == 0.0,
                  "train-enhancer: content loss is active (lambda1 > 0) but no "
                  "--sign-classifier checkpoint was given");
    phi = std::make_unique<tsdr::IdentityFeatures>();
  }

  tsdr::EnhancerConfig mc;
  mc.base_channels = o.base_channels;
  mc.num_residual_blocks = o.blocks;
  mc.seed = tsdr::Rng::derive(o.seed, "enhancer-init", o.kind).next_u64();
  tsdr::EnhanceNet net(mc);

  tsdr::EnhancerTrainConfig tc;
  tc.kind = kind;
  tc.patch_size = o.patch;
  tc.batch_size = o.batch;
  tc.epochs = o.epochs;
  tc.initial_lr = o.lr;
  tc.region_mode = o.region == "full" ? tsdr::RegionMode::kFull : tsdr::RegionMode::kSign;
  tsdr::require(o.region == "full" || o.region == "sign",
                "train-enhancer: --region must be 'sign' or 'full'");
  tc.rng_seed = tsdr::Rng::derive(o.seed, "enhancer-train", o.kind).next_u64();

  const tsdr::EnhancerHistory hist = tsdr::train_enhancer(net, detector, *phi, train, val, tc,
                                                          weights);

  const std::string ckpt_rel = "enhancer_" + std::string(tsdr::to_string(kind)) + ".ckpt";
  tsdr::save_enhancer(ctx.path(ckpt_rel), net, kind);
  ctx.note(ckpt_rel);
  ctx.write_text("enhancer_" + std::string(tsdr::to_string(kind)) + "_history.csv",
                 hist.to_csv());
  ctx.finish(app, "train-enhancer", o.seed);
  std::cout << "enhancer (" << o.kind << ") best validation loss " << hist.best_val_total
            << "\n";
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalOpts {
  std::string out = default_out_root();
  std::string manifest;
  std::string split = "test";
  std::string name = "pipeline";
  std::string classifier_ckpt;
  std::string detector_ckpt;
  std::string sign_classifier_ckpt;
  std::vector<std::string> enhancer_ckpts;
  bool dump_masks = false;
};

void run_eval(const CLI::App& app, const EvalOpts& o) {
  RunContext ctx(o.out);
  const auto splits = tsdr::load_dataset(o.manifest);
  const auto& records = split_of(splits, split_from_string(o.split));
  tsdr::require(!records.empty(), "eval: split '" + o.split + "' is empty");

  tsdr::ChallengeClassifier classifier = tsdr::load_challenge_classifier(o.classifier_ckpt);
  tsdr::SignDetector detector = tsdr::load_detector(o.detector_ckpt);
  tsdr::SignClassifier sign_classifier = tsdr::load_sign_classifier(o.sign_classifier_ckpt);
  std::vector<tsdr::LoadedEnhancer> enhancers;
  enhancers.reserve(o.enhancer_ckpts.size());
  for (const std::string& p : o.enhancer_ckpts) enhancers.push_back(tsdr::load_enhancer(p));

  tsdr::ModelBundle bundle;
  bundle.classifier = &classifier;
  bundle.detector = &detector;
  bundle.sign_classifier = &sign_classifier;
  for (auto& e : enhancers) bundle.enhancers[e.kind] = &e.net;

  std::vector<std::string> mask_rels;
  const tsdr::EvalReport report =
      tsdr::evaluate_records(o.name, records, [&](const tsdr::AnnotatedFrame& af) {
        tsdr::PipelineResult res = tsdr::run_pipeline(af.frame, bundle);
        if (o.dump_masks) {
          const std::string rel = "masks/" + sanitized(af.frame.video_id) + "_" +
                                  std::to_string(af.frame.frame_idx) + ".png";
          tsdr::write_png_gray(ctx.path(rel), res.mask);
          mask_rels.push_back(rel);
        }
        return res;
      });
  for (const std::string& rel : mask_rels) ctx.note(rel);

  json rj = report.to_json();
  rj["metadata"] = {{"manifest", o.manifest}, {"split", o.split}};
  ctx.write_text("report.json", rj.dump(2) + "\n");
  ctx.write_text("report.csv", report.to_csv());

  const tsdr::DegradationFiles deg = tsdr::degradation_report(ctx.path("plots"), {report});
  ctx.note("plots/" + fs::path(deg.csv_path).filename().string());
  for (const std::string& p : deg.plot_paths)
    ctx.note("plots/" + fs::path(p).filename().string());

  ctx.finish(app, "eval", std::nullopt);
  const tsdr::EvalCell totals = report.totals();
  std::cout << "evaluated " << totals.frames << " frames: precision " << totals.precision()
            << ", recall " << totals.recall() << "\n";
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

struct InferOpts {
  std::string out = default_out_root();
  std::string image;
  std::string classifier_ckpt;
  std::string detector_ckpt;
  std::string sign_classifier_ckpt;
  std::vector<std::string> enhancer_ckpts;
  std::string force_kind;
  std::string dump_mask;
};

void run_infer(const CLI::App& app, const InferOpts& o) {
  tsdr::Frame frame = tsdr::read_png(o.image);
  frame.video_id = fs::path(o.image).stem().string();
  frame.validate();

  tsdr::SignDetector detector = tsdr::load_detector(o.detector_ckpt);
  std::optional<tsdr::ChallengeClassifier> classifier;
  if (!o.classifier_ckpt.empty())
    classifier.emplace(tsdr::load_challenge_classifier(o.classifier_ckpt));
  std::optional<tsdr::SignClassifier> sign_classifier;
  if (!o.sign_classifier_ckpt.empty())
    sign_classifier.emplace(tsdr::load_sign_classifier(o.sign_classifier_ckpt));
  std::vector<tsdr::LoadedEnhancer> enhancers;
  for (const std::string& p : o.enhancer_ckpts) enhancers.push_back(tsdr::load_enhancer(p));

  tsdr::ModelBundle bundle;
  bundle.detector = &detector;
  if (classifier.has_value()) bundle.classifier = &*classifier;
  if (sign_classifier.has_value()) bundle.sign_classifier = &*sign_classifier;
  for (auto& e : enhancers) bundle.enhancers[e.kind] = &e.net;

  std::optional<tsdr::ChallengeKind> force;
  if (!o.force_kind.empty()) force = tsdr::challenge_kind_from_string(o.force_kind);
  tsdr::require(force.has_value() || classifier.has_value(),
                "infer: give --classifier or force a route with --force-kind");

  const tsdr::PipelineResult res = tsdr::run_pipeline(frame, bundle, force);
  if (!o.dump_mask.empty()) {
    if (fs::path(o.dump_mask).has_parent_path())
      fs::create_directories(fs::path(o.dump_mask).parent_path());
    tsdr::write_png_gray(o.dump_mask, res.mask);
  }

  for (const tsdr::Detection& d : res.detections) {
    json line{{"x", d.x},         {"y", d.y},
              {"w", d.w},         {"h", d.h},
              {"score", d.score}, {"class_id", d.class_id},
              {"routed_kind", tsdr::to_string(res.routed_kind)}};
    std::cout << line.dump() << "\n";
  }

  RunContext ctx(o.out);
  ctx.finish(app, "infer", std::nullopt);
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

struct AblateOpts {
  std::string out = default_out_root();
  std::string manifest;
  std::uint64_t seed = 0;
  std::string variants = "a,b,c,d,e,f,g,h";
  std::string kinds = "rain";
  std::int64_t patch = 32;
  std::int64_t enhancer_epochs = 4;
  std::int64_t detector_epochs = 10;
  std::int64_t sign_epochs = 6;
  std::int64_t detector_channels = 8;
  std::int64_t enhancer_channels = 8;
  int blocks = 1;
  std::int64_t sign_input = 16;
  int classes = 14;
};

void run_ablate(const CLI::App& app, const AblateOpts& o) {
  RunContext ctx(o.out);
  const auto kinds = parse_kind_list(o.kinds);
  std::vector<tsdr::AblationVariant> variants;
  for (const std::string& tok : split_list(o.variants))
    variants.push_back(tsdr::ablation_variant_from_string(tok));
  tsdr::require(!variants.empty(), "ablate: no variants requested");

  const auto splits = tsdr::load_dataset(o.manifest, o.classes);
  const auto train = restricted_to(split_of(splits, tsdr::SplitName::kTrain), kinds);
  const auto val = restricted_to(split_of(splits, tsdr::SplitName::kValidation), kinds);
  const auto test = restricted_to(split_of(splits, tsdr::SplitName::kTest), kinds);
  const auto clean_train = clean_only(train);
  const auto clean_val = clean_only(val);

  // Shared stages: detector trained on clean frames (then frozen), the
  // retrained-on-everything detector for the variant that asks for it, and
  // the sign classifier powering both crop labels and the feature loss.
  tsdr::DetectorConfig dcfg;
  dcfg.base_channels = o.detector_channels;
  dcfg.seed = tsdr::Rng::derive(o.seed, "ablate-detector-init").next_u64();
  tsdr::SignDetector detector(dcfg);
  tsdr::DetectorTrainConfig dtc;
  dtc.epochs = o.detector_epochs;
  dtc.rng_seed = tsdr::Rng::derive(o.seed, "ablate-detector-train").next_u64();
  tsdr::train_detector(detector, clean_train, clean_val, dtc);
  tsdr::save_detector(ctx.path("models/detector.ckpt"), detector);
  ctx.note("models/detector.ckpt");

  std::optional<tsdr::SignDetector> detector_b;
  const bool wants_b =
      std::find(variants.begin(), variants.end(), tsdr::AblationVariant::kB) != variants.end();
  if (wants_b) {
    tsdr::DetectorConfig bcfg = dcfg;
    bcfg.seed = tsdr::Rng::derive(o.seed, "ablate-detector-b-init").next_u64();
    detector_b.emplace(bcfg);
    tsdr::DetectorTrainConfig btc = dtc;
    btc.allow_challenged = true;
    btc.rng_seed = tsdr::Rng::derive(o.seed, "ablate-detector-b-train").next_u64();
    tsdr::train_detector(*detector_b, train, val, btc);
    tsdr::save_detector(ctx.path("models/detector_retrained.ckpt"), *detector_b);
    ctx.note("models/detector_retrained.ckpt");
  }

  tsdr::SignClassifierConfig scfg;
  scfg.num_classes = o.classes;
  scfg.input_size = o.sign_input;
  scfg.seed = tsdr::Rng::derive(o.seed, "ablate-sign-init").next_u64();
  tsdr::SignClassifier sign_classifier(scfg);
  tsdr::SignTrainConfig stc;
  stc.epochs = o.sign_epochs;
  stc.rng_seed = tsdr::Rng::derive(o.seed, "ablate-sign-train").next_u64();
  tsdr::train_sign_classifier(sign_classifier, clean_train, clean_val, stc);
  tsdr::save_sign_classifier(ctx.path("models/sign_classifier.ckpt"), sign_classifier);
  ctx.note("models/sign_classifier.ckpt");
  tsdr::SignNetFeatures phi(sign_classifier);

  std::vector<tsdr::EvalReport> reports;
  std::ostringstream table;
  table.precision(17);
  table << "variant,description,frames,tp,fp,fn,precision,recall\n";
  for (const tsdr::AblationVariant v : variants) {
    const tsdr::AblationSpec spec = tsdr::ablation_spec(v);
    const std::string vname = tsdr::to_string(v);

    std::vector<tsdr::LoadedEnhancer> trained;
    tsdr::ModelBundle bundle;
    bundle.detector = spec.retrain_detector ? &*detector_b : &detector;
    bundle.sign_classifier = &sign_classifier;
    if (spec.uses_enhancer) {
      for (const tsdr::ChallengeKind kind : kinds) {
        tsdr::EnhancerConfig ecfg;
        ecfg.base_channels = o.enhancer_channels;
        ecfg.num_residual_blocks = o.blocks;
        ecfg.seed = tsdr::Rng::derive(o.seed, "ablate-enhancer-init", vname,
                                      tsdr::to_string(kind))
                        .next_u64();
        tsdr::EnhanceNet net(ecfg);
        tsdr::EnhancerTrainConfig etc;
        etc.kind = kind;
        etc.patch_size = o.patch;
        etc.epochs = o.enhancer_epochs;
        etc.region_mode = spec.region_mode;
        etc.rng_seed = tsdr::Rng::derive(o.seed, "ablate-enhancer-train", vname,
                                         tsdr::to_string(kind))
                           .next_u64();
        const tsdr::LossWeights w = tsdr::ablation_loss_weights(spec, kind);
        tsdr::train_enhancer(net, *bundle.detector, phi, train, val, etc, w);
        const std::string rel = "models/enhancer_" + vname + "_" +
                                std::string(tsdr::to_string(kind)) + ".ckpt";
        tsdr::save_enhancer(ctx.path(rel), net, kind);
        ctx.note(rel);
        trained.push_back({std::move(net), kind});
      }
      for (auto& e : trained) bundle.enhancers[e.kind] = &e.net;
    }

    tsdr::EvalReport rep = tsdr::evaluate_ablation_variant(vname, spec, test, bundle);
    rep.metadata = {{"description", spec.description}};
    ctx.write_text("report_" + vname + ".json", rep.to_json().dump(2) + "\n");
    const tsdr::EvalCell t = rep.totals();
    table << vname << ",\"" << spec.description << "\"," << t.frames << ',' << t.tp << ','
          << t.fp << ',' << t.fn << ',' << t.precision() << ',' << t.recall() << '\n';
    reports.push_back(std::move(rep));
    std::cout << "variant " << vname << " (" << spec.description << "): precision "
              << t.precision() << ", recall " << t.recall() << "\n";
  }

  ctx.write_text("ablation.csv", table.str());
  const tsdr::DegradationFiles deg = tsdr::degradation_report(ctx.path("plots"), reports);
  ctx.note("plots/" + fs::path(deg.csv_path).filename().string());
  for (const std::string& p : deg.plot_paths)
    ctx.note("plots/" + fs::path(p).filename().string());
  ctx.finish(app, "ablate", o.seed);
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct ReportOpts {
  std::string out = default_out_root();
  std::vector<std::string> report_files;
};

void run_report(const CLI::App& app, const ReportOpts& o) {
  RunContext ctx(o.out);
  std::vector<tsdr::EvalReport> reports;
  for (const std::string& path : o.report_files) {
    std::ifstream in(path);
    tsdr::require(static_cast<bool>(in), "report: cannot open " + path);
    json j;
    in >> j;
    reports.push_back(tsdr::EvalReport::from_json(j));
  }
  const tsdr::DegradationFiles deg = tsdr::degradation_report(ctx.root(), reports);
  ctx.note(fs::path(deg.csv_path).filename().string());
  for (const std::string& p : deg.plot_paths) ctx.note(fs::path(p).filename().string());
  ctx.finish(app, "report", std::nullopt);
  std::cout << "degradation summary over " << reports.size() << " variant(s) written to "
            << ctx.root() << "\n";
}

// ---------------------------------------------------------------------------
// wiring
// ---------------------------------------------------------------------------

void add_out_option(CLI::App* sub, std::string& out) {
  sub->add_option("--out", out, "Output directory (default: $TSDR_LAB_OUT or ./tsdr-out)")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Traffic-sign detection and restoration laboratory"};
  app.require_subcommand(1);
  app.set_version_flag("--version", tsdr::kVersion);
  app.set_config("--config", "",
                 "INI config file; command-line flags override file values");

  // ---- synth ----
  auto synth_opts = std::make_shared<SynthOpts>();
  {
    CLI::App* sub = app.add_subcommand("synth", "Generate a synthetic sign corpus + manifest");
    add_out_option(sub, synth_opts->out);
    sub->add_option("--seed", synth_opts->seed, "Corpus RNG seed")->required();
    sub->add_option("--train", synth_opts->n_train, "Training frames")->capture_default_str();
    sub->add_option("--val", synth_opts->n_val, "Validation frames")->capture_default_str();
    sub->add_option("--test", synth_opts->n_test, "Test frames")->capture_default_str();
    sub->add_option("--size", synth_opts->size, "Frame height = width")->capture_default_str();
    sub->add_option("--classes", synth_opts->classes, "Sign classes")->capture_default_str();
    sub->add_option("--kinds", synth_opts->kinds, "Challenge kinds (comma list)")
        ->capture_default_str();
    sub->add_option("--levels", synth_opts->levels, "Severity levels (comma list)")
        ->capture_default_str();
    sub->callback([sub, synth_opts] { run_synth(*sub, *synth_opts); });
  }

  // ---- train-classifier ----
  auto clf_opts = std::make_shared<TrainClassifierOpts>();
  {
    CLI::App* sub = app.add_subcommand("train-classifier", "Train the challenge-type classifier");
    add_out_option(sub, clf_opts->out);
    sub->add_option("--manifest", clf_opts->manifest, "Dataset manifest (JSON lines)")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", clf_opts->seed, "Training RNG seed")->required();
    sub->add_option("--input-size", clf_opts->input_size, "Classifier input resolution")
        ->capture_default_str();
    sub->add_option("--width-scale", clf_opts->width_scale, "Channel width multiplier")
        ->capture_default_str();
    sub->add_option("--epochs", clf_opts->epochs, "Training epochs")->capture_default_str();
    sub->add_option("--batch", clf_opts->batch, "Batch size")->capture_default_str();
    sub->add_option("--lr", clf_opts->lr, "Initial learning rate")->capture_default_str();
    sub->callback([sub, clf_opts] { run_train_classifier(*sub, *clf_opts); });
  }

  // ---- train-detector ----
  auto det_opts = std::make_shared<TrainDetectorOpts>();
  {
    CLI::App* sub = app.add_subcommand("train-detector", "Train and freeze the sign detector");
    add_out_option(sub, det_opts->out);
    sub->add_option("--manifest", det_opts->manifest, "Dataset manifest (JSON lines)")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", det_opts->seed, "Training RNG seed")->required();
    sub->add_option("--epochs", det_opts->epochs, "Training epochs")->capture_default_str();
    sub->add_option("--batch", det_opts->batch, "Batch size")->capture_default_str();
    sub->add_option("--lr", det_opts->lr, "Initial learning rate")->capture_default_str();
    sub->add_option("--base-channels", det_opts->base_channels, "Detector width")
        ->capture_default_str();
    sub->add_option("--threshold", det_opts->threshold, "Mask probability threshold")
        ->capture_default_str();
    sub->add_flag("--include-challenged", det_opts->include_challenged,
                  "Also train on challenged frames (default: clean frames only)");
    sub->add_option("--alpha", det_opts->alpha, "Overlap-loss false-positive weight")
        ->capture_default_str();
    sub->add_option("--beta", det_opts->beta, "Overlap-loss false-negative weight")
        ->capture_default_str();
    sub->add_option("--gamma", det_opts->gamma, "L1 term weight")->capture_default_str();
    sub->callback([sub, det_opts] { run_train_detector(*sub, *det_opts); });
  }

  // ---- train-sign-classifier ----
  auto sign_opts = std::make_shared<TrainSignOpts>();
  {
    CLI::App* sub = app.add_subcommand("train-sign-classifier", "Train the sign-type classifier");
    add_out_option(sub, sign_opts->out);
    sub->add_option("--manifest", sign_opts->manifest, "Dataset manifest (JSON lines)")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", sign_opts->seed, "Training RNG seed")->required();
    sub->add_option("--epochs", sign_opts->epochs, "Training epochs")->capture_default_str();
    sub->add_option("--batch", sign_opts->batch, "Batch size")->capture_default_str();
    sub->add_option("--lr", sign_opts->lr, "Initial learning rate")->capture_default_str();
    sub->add_option("--input-size", sign_opts->input_size, "Crop input resolution")
        ->capture_default_str();
    sub->add_option("--classes", sign_opts->classes, "Number of sign classes")
        ->capture_default_str();
    sub->callback([sub, sign_opts] { run_train_sign_classifier(*sub, *sign_opts); });
  }

  // ---- train-enhancer ----
  auto enh_opts = std::make_shared<TrainEnhancerOpts>();
  {
    CLI::App* sub =
        app.add_subcommand("train-enhancer", "Train one challenge kind's enhancement network");
    add_out_option(sub, enh_opts->out);
    sub->add_option("--manifest", enh_opts->manifest, "Dataset manifest (JSON lines)")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--detector", enh_opts->detector_ckpt, "Frozen detector checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--sign-classifier", enh_opts->sign_classifier_ckpt,
                    "Sign classifier checkpoint (feature extractor for the content loss)")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", enh_opts->seed, "Training RNG seed")->required();
    sub->add_option("--kind", enh_opts->kind, "Challenge kind to train for")->required();
    sub->add_option("--preset", enh_opts->preset,
                    "Loss-weight preset name (e.g. paper-table-2); overrides the lambda flags");
    sub->add_option("--lambda1", enh_opts->lambda1, "Content-loss coupling")
        ->capture_default_str();
    sub->add_option("--lambda2", enh_opts->lambda2, "Localizer-loss coupling")
        ->capture_default_str();
    sub->add_option("--alpha", enh_opts->alpha, "Overlap-loss false-positive weight")
        ->capture_default_str();
    sub->add_option("--beta", enh_opts->beta, "Overlap-loss false-negative weight")
        ->capture_default_str();
    sub->add_option("--gamma", enh_opts->gamma, "Overlap L1 term weight")
        ->capture_default_str();
    sub->add_option("--region", enh_opts->region, "Reconstruction region: sign or full")
        ->capture_default_str();
    sub->add_option("--patch", enh_opts->patch, "Training patch size")->capture_default_str();
    sub->add_option("--epochs", enh_opts->epochs, "Training epochs")->capture_default_str();
    sub->add_option("--batch", enh_opts->batch, "Patches per level per group")
        ->capture_default_str();
    sub->add_option("--lr", enh_opts->lr, "Initial learning rate")->capture_default_str();
    sub->add_option("--base-channels", enh_opts->base_channels, "Enhancer width")
        ->capture_default_str();
    sub->add_option("--blocks", enh_opts->blocks, "Residual blocks")->capture_default_str();
    sub->callback([sub, enh_opts] { run_train_enhancer(*sub, *enh_opts); });
  }

  // ---- eval ----
  auto eval_opts = std::make_shared<EvalOpts>();
  {
    CLI::App* sub = app.add_subcommand("eval", "Evaluate the full pipeline over a split");
    add_out_option(sub, eval_opts->out);
    sub->add_option("--manifest", eval_opts->manifest, "Dataset manifest (JSON lines)")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--split", eval_opts->split, "Split: train, validation, or test")
        ->capture_default_str();
    sub->add_option("--name", eval_opts->name, "Report name")->capture_default_str();
    sub->add_option("--classifier", eval_opts->classifier_ckpt, "Challenge classifier checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--detector", eval_opts->detector_ckpt, "Detector checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--sign-classifier", eval_opts->sign_classifier_ckpt,
                    "Sign classifier checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--enhancer", eval_opts->enhancer_ckpts,
                    "Enhancer checkpoint (repeatable; kind read from the file)")
        ->check(CLI::ExistingFile);
    sub->add_flag("--dump-masks", eval_opts->dump_masks,
                  "Write each frame's probability mask as an 8-bit PNG");
    sub->callback([sub, eval_opts] { run_eval(*sub, *eval_opts); });
  }

  // ---- infer ----
  auto infer_opts = std::make_shared<InferOpts>();
  {
    CLI::App* sub =
        app.add_subcommand("infer", "Run the pipeline on one image; detections as JSON lines");
    add_out_option(sub, infer_opts->out);
    sub->add_option("--image", infer_opts->image, "Input PNG image")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--classifier", infer_opts->classifier_ckpt,
                    "Challenge classifier checkpoint")
        ->check(CLI::ExistingFile);
    sub->add_option("--detector", infer_opts->detector_ckpt, "Detector checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--sign-classifier", infer_opts->sign_classifier_ckpt,
                    "Sign classifier checkpoint")
        ->check(CLI::ExistingFile);
    sub->add_option("--enhancer", infer_opts->enhancer_ckpts,
                    "Enhancer checkpoint (repeatable)")
        ->check(CLI::ExistingFile);
    sub->add_option("--force-kind", infer_opts->force_kind,
                    "Skip the classifier and route as this kind (none bypasses enhancement)");
    sub->add_option("--dump-mask", infer_opts->dump_mask, "Write the probability mask PNG here");
    sub->callback([sub, infer_opts] { run_infer(*sub, *infer_opts); });
  }

  // ---- ablate ----
  auto abl_opts = std::make_shared<AblateOpts>();
  {
    CLI::App* sub = app.add_subcommand(
        "ablate", "Train and score the component study variants (a..h) on one corpus");
    add_out_option(sub, abl_opts->out);
    sub->add_option("--manifest", abl_opts->manifest, "Dataset manifest (JSON lines)")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", abl_opts->seed, "Study RNG seed")->required();
    sub->add_option("--variants", abl_opts->variants, "Variants to run (comma list of a..h)")
        ->capture_default_str();
    sub->add_option("--kinds", abl_opts->kinds, "Challenge kinds to include (comma list)")
        ->capture_default_str();
    sub->add_option("--patch", abl_opts->patch, "Enhancer training patch size")
        ->capture_default_str();
    sub->add_option("--enhancer-epochs", abl_opts->enhancer_epochs, "Enhancer epochs")
        ->capture_default_str();
    sub->add_option("--detector-epochs", abl_opts->detector_epochs, "Detector epochs")
        ->capture_default_str();
    sub->add_option("--sign-epochs", abl_opts->sign_epochs, "Sign classifier epochs")
        ->capture_default_str();
    sub->add_option("--detector-channels", abl_opts->detector_channels, "Detector width")
        ->capture_default_str();
    sub->add_option("--enhancer-channels", abl_opts->enhancer_channels, "Enhancer width")
        ->capture_default_str();
    sub->add_option("--blocks", abl_opts->blocks, "Enhancer residual blocks")
        ->capture_default_str();
    sub->add_option("--sign-input", abl_opts->sign_input, "Sign classifier input resolution")
        ->capture_default_str();
    sub->add_option("--classes", abl_opts->classes, "Number of sign classes")
        ->capture_default_str();
    sub->callback([sub, abl_opts] { run_ablate(*sub, *abl_opts); });
  }

  // ---- report ----
  auto rep_opts = std::make_shared<ReportOpts>();
  {
    CLI::App* sub = app.add_subcommand(
        "report", "Combine evaluation report JSONs into degradation curves and a CSV");
    add_out_option(sub, rep_opts->out);
    sub->add_option("reports", rep_opts->report_files, "Evaluation report JSON files")
        ->required()
        ->check(CLI::ExistingFile);
    sub->callback([sub, rep_opts] { run_report(*sub, *rep_opts); });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    const CLI::App* target = &app;
    while (!target->get_subcommands().empty()) target = target->get_subcommands().front();
    std::cout << target->help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    std::cout << app.version() << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "tsdr-lab: " << e.what() << "\n\n" << app.help();
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "tsdr-lab: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
