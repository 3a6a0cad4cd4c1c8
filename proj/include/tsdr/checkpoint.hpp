#pragma once

// Single-file model checkpoints. Layout:
//
//   line 1: "TSDRCKPT 1"                                (format magic + version)
//   line 2: one-line JSON header: library version, model tag, config,
//           model-specific extras, and the ordered tensor directory
//   then:   the raw little-endian IEEE-754 doubles of every tensor, in
//           directory order (parameters first, then buffers)
//
// Values round-trip bit-exactly, so weight checksums survive save/load.

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tsdr/models/challenge_classifier.hpp"
#include "tsdr/models/detector.hpp"
#include "tsdr/models/enhancer.hpp"
#include "tsdr/models/sign_classifier.hpp"

namespace tsdr {

namespace detail {

inline constexpr const char* kCkptMagic = "TSDRCKPT 1";

inline void require_little_endian() {
  require(std::bit_cast<std::uint64_t>(1.0) == 0x3FF0000000000000ULL,
          "checkpoint: only little-endian hosts are supported");
}

inline nlohmann::json tensor_directory(const std::vector<nn::Param*>& params,
                                       const std::vector<nn::Param*>& buffers) {
  auto dir = nlohmann::json::array();
  for (const auto* group : {&params, &buffers})
    for (const nn::Param* p : *group) {
      nlohmann::json e;
      e["name"] = p->name;
      e["shape"] = p->value.shape();
      dir.push_back(e);
    }
  return dir;
}

inline void write_checkpoint(const std::string& path, const std::string& model_tag,
                             const nlohmann::json& config, const nlohmann::json& extra,
                             const std::vector<nn::Param*>& params,
                             const std::vector<nn::Param*>& buffers) {
  require_little_endian();
  nlohmann::json header;
  header["library_version"] = kVersion;
  header["model"] = model_tag;
  header["config"] = config;
  header["extra"] = extra;
  header["tensors"] = tensor_directory(params, buffers);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), "checkpoint: cannot open for writing: " + path);
  out << kCkptMagic << '\n' << header.dump() << '\n';
  for (const auto* group : {&params, &buffers})
    for (const nn::Param* p : *group)
      out.write(reinterpret_cast<const char*>(p->value.data()),
                static_cast<std::streamsize>(p->value.numel() * sizeof(double)));
  require(static_cast<bool>(out), "checkpoint: write failed: " + path);
}

struct CheckpointHeader {
  nlohmann::json config;
  nlohmann::json extra;
  nlohmann::json tensors;
  std::string payload;  // raw double bytes
};

inline CheckpointHeader read_checkpoint(const std::string& path, const std::string& expected_tag) {
  require_little_endian();
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "checkpoint: cannot open: " + path);
  std::string magic, header_line;
  require(static_cast<bool>(std::getline(in, magic)), "checkpoint: empty file: " + path);
  require(magic == kCkptMagic, "checkpoint: bad magic in " + path);
  require(static_cast<bool>(std::getline(in, header_line)), "checkpoint: missing header: " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw Error("checkpoint: malformed header in " + path + ": " + e.what());
  }
  const std::string tag = header.at("model").get<std::string>();
  require(tag == expected_tag, "checkpoint: " + path + " holds a '" + tag + "' model, expected '" +
                                   expected_tag + "'");

  std::int64_t expected_doubles = 0;
  for (const auto& t : header.at("tensors")) {
    std::int64_t n = 1;
    for (const auto& d : t.at("shape")) n *= d.get<std::int64_t>();
    expected_doubles += n;
  }
  CheckpointHeader out;
  out.config = header.at("config");
  out.extra = header.at("extra");
  out.tensors = header.at("tensors");
  out.payload.resize(static_cast<std::size_t>(expected_doubles) * sizeof(double));
  in.read(out.payload.data(), static_cast<std::streamsize>(out.payload.size()));
  require(in.gcount() == static_cast<std::streamsize>(out.payload.size()),
          "checkpoint: truncated payload in " + path);
  in.peek();
  require(in.eof(), "checkpoint: trailing bytes in " + path);
  return out;
}

inline void fill_tensors(const CheckpointHeader& h, const std::vector<nn::Param*>& params,
                         const std::vector<nn::Param*>& buffers, const std::string& path) {
  std::vector<nn::Param*> all;
  for (const auto* group : {&params, &buffers}) all.insert(all.end(), group->begin(), group->end());
  require(h.tensors.size() == all.size(),
          "checkpoint: tensor count mismatch in " + path + " (" +
              std::to_string(h.tensors.size()) + " stored, model has " +
              std::to_string(all.size()) + ")");
  const char* src = h.payload.data();
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto& entry = h.tensors[i];
    require(entry.at("name").get<std::string>() == all[i]->name,
            "checkpoint: tensor name mismatch at slot " + std::to_string(i) + " in " + path);
    std::vector<std::int64_t> shape;
    for (const auto& d : entry.at("shape")) shape.push_back(d.get<std::int64_t>());
    require(shape == all[i]->value.shape(),
            "checkpoint: shape mismatch for tensor '" + all[i]->name + "' in " + path);
    const std::size_t bytes = static_cast<std::size_t>(all[i]->value.numel()) * sizeof(double);
    std::copy(src, src + bytes, reinterpret_cast<char*>(all[i]->value.data()));
    src += bytes;
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Challenge classifier
// ---------------------------------------------------------------------------

inline void save_challenge_classifier(const std::string& path, ChallengeClassifier& model) {
  const auto& c = model.config();
  nlohmann::json cfg{{"input_size", c.input_size},
                     {"width_scale", c.width_scale},
                     {"num_classes", c.num_classes},
                     {"seed", c.seed}};
  detail::write_checkpoint(path, "challenge_classifier", cfg, nlohmann::json::object(),
                           model.params(), model.buffers());
}

inline ChallengeClassifier load_challenge_classifier(const std::string& path) {
  const auto h = detail::read_checkpoint(path, "challenge_classifier");
  ClassifierConfig cfg;
  cfg.input_size = h.config.at("input_size").get<std::int64_t>();
  cfg.width_scale = h.config.at("width_scale").get<double>();
  cfg.num_classes = h.config.at("num_classes").get<int>();
  cfg.seed = h.config.at("seed").get<std::uint64_t>();
  ChallengeClassifier model(cfg);
  detail::fill_tensors(h, model.params(), model.buffers(), path);
  return model;
}

// ---------------------------------------------------------------------------
// Enhancer (one checkpoint per challenge kind)
// ---------------------------------------------------------------------------

struct LoadedEnhancer {
  EnhanceNet net;
  ChallengeKind kind;
};

inline void save_enhancer(const std::string& path, EnhanceNet& model, ChallengeKind kind) {
  require(kind != ChallengeKind::kNone, "save_enhancer: enhancers are per challenge kind");
  const auto& c = model.config();
  nlohmann::json cfg{{"base_channels", c.base_channels},
                     {"num_residual_blocks", c.num_residual_blocks},
                     {"seed", c.seed}};
  detail::write_checkpoint(path, "enhancer", cfg, {{"challenge_kind", to_string(kind)}},
                           model.params(), model.buffers());
}

inline LoadedEnhancer load_enhancer(const std::string& path) {
  const auto h = detail::read_checkpoint(path, "enhancer");
  EnhancerConfig cfg;
  cfg.base_channels = h.config.at("base_channels").get<std::int64_t>();
  cfg.num_residual_blocks = h.config.at("num_residual_blocks").get<int>();
  cfg.seed = h.config.at("seed").get<std::uint64_t>();
  LoadedEnhancer out{EnhanceNet(cfg),
                     challenge_kind_from_string(h.extra.at("challenge_kind").get<std::string>())};
  detail::fill_tensors(h, out.net.params(), out.net.buffers(), path);
  return out;
}

// ---------------------------------------------------------------------------
// Sign detector
// ---------------------------------------------------------------------------

inline void save_detector(const std::string& path, SignDetector& model) {
  const auto& c = model.config();
  nlohmann::json cfg{{"base_channels", c.base_channels},
                     {"threshold", c.threshold},
                     {"min_area_ref", c.min_area_ref},
                     {"seed", c.seed}};
  detail::write_checkpoint(path, "detector", cfg, {{"frozen", model.frozen()}}, model.params(),
                           model.buffers());
}

inline SignDetector load_detector(const std::string& path) {
  const auto h = detail::read_checkpoint(path, "detector");
  DetectorConfig cfg;
  cfg.base_channels = h.config.at("base_channels").get<std::int64_t>();
  cfg.threshold = h.config.at("threshold").get<double>();
  cfg.min_area_ref = h.config.at("min_area_ref").get<double>();
  cfg.seed = h.config.at("seed").get<std::uint64_t>();
  SignDetector model(cfg);
  detail::fill_tensors(h, model.params(), model.buffers(), path);
  if (h.extra.at("frozen").get<bool>()) model.freeze();
  return model;
}

// ---------------------------------------------------------------------------
// Sign classifier
// ---------------------------------------------------------------------------

inline void save_sign_classifier(const std::string& path, SignClassifier& model) {
  const auto& c = model.config();
  nlohmann::json cfg{
      {"num_classes", c.num_classes}, {"input_size", c.input_size}, {"seed", c.seed}};
  detail::write_checkpoint(path, "sign_classifier", cfg, nlohmann::json::object(), model.params(),
                           model.buffers());
}

inline SignClassifier load_sign_classifier(const std::string& path) {
  const auto h = detail::read_checkpoint(path, "sign_classifier");
  SignClassifierConfig cfg;
  cfg.num_classes = h.config.at("num_classes").get<int>();
  cfg.input_size = h.config.at("input_size").get<std::int64_t>();
  cfg.seed = h.config.at("seed").get<std::uint64_t>();
  SignClassifier model(cfg);
  detail::fill_tensors(h, model.params(), model.buffers(), path);
  return model;
}

}  // namespace tsdr
