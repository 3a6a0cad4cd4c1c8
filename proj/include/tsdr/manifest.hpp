#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tsdr/png_io.hpp"
#include "tsdr/types.hpp"

namespace tsdr {

/// A handle to one annotated frame. Annotations and identity are loaded
/// eagerly; pixels are materialized on demand through load(), so large splits
/// can be iterated without holding every image in memory. Records are
/// immutable once constructed and safe to share across readers.
struct FrameRecord {
  std::string video_id;
  std::int64_t frame_idx = 0;
  ChallengeLabel challenge;
  std::vector<SignAnnotation> signs;
  std::int64_t height = 0;
  std::int64_t width = 0;
  bool has_clean_ref = false;
  std::string image_path;        // empty for in-memory records
  std::string clean_image_path;  // empty if absent

  std::function<AnnotatedFrame()> load;

  std::string id() const { return video_id + "#" + std::to_string(frame_idx); }
};

struct DatasetSplit {
  SplitName name = SplitName::kTrain;
  std::vector<FrameRecord> records;
};

using DatasetSplits = std::map<SplitName, DatasetSplit>;

namespace detail {

inline std::string record_context(const std::string& path, std::size_t line_no) {
  return path + ":" + std::to_string(line_no);
}

}  // namespace detail

/// Parse a JSON-lines manifest into the three dataset splits.
///
/// Each line is one record:
///   {"video_id": "...", "frame_idx": 0, "split": "train",
///    "image_path": "...", "clean_image_path": "...",        (optional)
///    "challenge": {"kind": "rain", "level": 3},
///    "signs": [{"x":..,"y":..,"w":..,"h":..,"class_id":..}, ...]}
///
/// Image paths are resolved relative to the manifest's directory. Annotation
/// geometry is validated against the PNG header dimensions; challenged records
/// must name a clean counterpart. Splits must be pairwise disjoint by
/// (video_id, frame_idx).
inline DatasetSplits load_dataset(const std::string& manifest_path, int num_sign_classes = 14) {
  namespace fs = std::filesystem;
  std::ifstream in(manifest_path);
  if (!in) throw Error("cannot open manifest: " + manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();

  DatasetSplits splits;
  for (SplitName s : {SplitName::kTrain, SplitName::kValidation, SplitName::kTest})
    splits[s] = DatasetSplit{s, {}};

  std::map<std::string, SplitName> owner;  // (video_id#frame) -> split
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error("manifest parse error at " + detail::record_context(manifest_path, line_no) +
                  ": " + e.what());
    }

    FrameRecord rec;
    try {
      rec.video_id = j.at("video_id").get<std::string>();
      rec.frame_idx = j.at("frame_idx").get<std::int64_t>();
      const auto split = split_from_string(j.at("split").get<std::string>());
      rec.image_path = (base / j.at("image_path").get<std::string>()).string();
      if (j.contains("clean_image_path"))
        rec.clean_image_path = (base / j.at("clean_image_path").get<std::string>()).string();
      rec.challenge.kind = challenge_kind_from_string(j.at("challenge").at("kind"));
      rec.challenge.level = j.at("challenge").at("level").get<int>();
      rec.challenge.validate();
      for (const auto& js : j.at("signs")) {
        SignAnnotation s;
        s.x = js.at("x").get<std::int64_t>();
        s.y = js.at("y").get<std::int64_t>();
        s.w = js.at("w").get<std::int64_t>();
        s.h = js.at("h").get<std::int64_t>();
        s.class_id = js.at("class_id").get<int>();
        rec.signs.push_back(s);
      }

      if (!fs::exists(rec.image_path)) throw Error("missing image file: " + rec.image_path);
      std::tie(rec.height, rec.width) = read_png_size(rec.image_path);
      for (const auto& s : rec.signs) s.validate(rec.height, rec.width, num_sign_classes);
      rec.has_clean_ref = !rec.clean_image_path.empty();
      if (rec.has_clean_ref && !fs::exists(rec.clean_image_path))
        throw Error("missing clean image file: " + rec.clean_image_path);
      if (rec.challenge.kind != ChallengeKind::kNone && !rec.has_clean_ref)
        throw Error("challenged record lacks a clean_image_path");

      const std::string key = rec.id();
      auto [it, inserted] = owner.emplace(key, split);
      if (!inserted && it->second != split)
        throw Error("record " + key + " appears in both '" + to_string(it->second) + "' and '" +
                    to_string(split) + "' splits");

      const std::string img = rec.image_path;
      const std::string clean = rec.clean_image_path;
      const auto vid = rec.video_id;
      const auto fidx = rec.frame_idx;
      const auto challenge = rec.challenge;
      const auto signs = rec.signs;
      rec.load = [img, clean, vid, fidx, challenge, signs]() {
        AnnotatedFrame af;
        af.frame = read_png(img);
        af.frame.video_id = vid;
        af.frame.frame_idx = fidx;
        af.challenge = challenge;
        af.signs = signs;
        if (!clean.empty()) {
          af.clean_ref = read_png(clean);
          af.clean_ref->video_id = vid;
          af.clean_ref->frame_idx = fidx;
        }
        return af;
      };
      splits[split].records.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw Error("manifest record error at " + detail::record_context(manifest_path, line_no) +
                  ": " + e.what());
    } catch (const Error& e) {
      throw Error("manifest record error at " + detail::record_context(manifest_path, line_no) +
                  " (record " + rec.video_id + "#" + std::to_string(rec.frame_idx) +
                  "): " + e.what());
    }
  }
  return splits;
}

/// One manifest line for a record whose images already sit on disk at paths
/// relative to the manifest directory.
inline std::string manifest_line(const std::string& video_id, std::int64_t frame_idx,
                                 SplitName split, const std::string& rel_image_path,
                                 const std::string& rel_clean_path, const ChallengeLabel& challenge,
                                 const std::vector<SignAnnotation>& signs) {
  nlohmann::json j;
  j["video_id"] = video_id;
  j["frame_idx"] = frame_idx;
  j["split"] = to_string(split);
  j["image_path"] = rel_image_path;
  if (!rel_clean_path.empty()) j["clean_image_path"] = rel_clean_path;
  j["challenge"] = {{"kind", to_string(challenge.kind)}, {"level", challenge.level}};
  auto arr = nlohmann::json::array();
  for (const auto& s : signs)
    arr.push_back({{"x", s.x}, {"y", s.y}, {"w", s.w}, {"h", s.h}, {"class_id", s.class_id}});
  j["signs"] = arr;
  return j.dump();
}

/// Wrap an in-memory annotated frame as a record handle (used by the
/// synthetic-corpus helpers and by tests).
inline FrameRecord make_memory_record(std::function<AnnotatedFrame()> gen) {
  AnnotatedFrame probe = gen();
  FrameRecord rec;
  rec.video_id = probe.frame.video_id;
  rec.frame_idx = probe.frame.frame_idx;
  rec.challenge = probe.challenge;
  rec.signs = probe.signs;
  rec.height = probe.frame.height();
  rec.width = probe.frame.width();
  rec.has_clean_ref = probe.clean_ref.has_value();
  rec.load = std::move(gen);
  return rec;
}

}  // namespace tsdr
