#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rgait/errors.hpp"
#include "rgait/frame.hpp"
#include "rgait/pgm.hpp"

namespace rgait {

inline constexpr const char* kRoleGallery = "gallery";
inline constexpr const char* kRoleProbe = "probe";
inline constexpr const char* kRoleDetectorTrain = "detector-train";

struct ManifestEntry {
  std::string subject_id;
  std::string sequence_id;
  std::string role;                         // gallery | probe | detector-train
  std::vector<std::string> frames;          // paths relative to the manifest
  std::optional<std::vector<bool>> mask;    // per-frame, true = occluded

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

// Line-oriented JSON: one entry object per line. Frame paths resolve
// relative to the manifest's directory.
struct DatasetManifest {
  std::filesystem::path base_dir;
  std::vector<ManifestEntry> entries;

  static DatasetManifest load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("missing manifest: " + path.string());
    DatasetManifest m;
    m.base_dir = path.has_parent_path() ? path.parent_path() : ".";
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw data_error("manifest " + path.string() + " line " + std::to_string(lineno) +
                         ": " + e.what());
      }
      ManifestEntry e;
      try {
        e.subject_id = j.at("subject_id").get<std::string>();
        e.sequence_id = j.at("sequence_id").get<std::string>();
        e.role = j.at("role").get<std::string>();
        e.frames = j.at("frames").get<std::vector<std::string>>();
        if (j.contains("mask")) {
          std::vector<bool> mask;
          for (const auto& v : j.at("mask")) mask.push_back(v.get<int>() != 0);
          e.mask = std::move(mask);
        }
      } catch (const nlohmann::json::exception& e2) {
        throw data_error("manifest " + path.string() + " line " + std::to_string(lineno) +
                         ": " + e2.what());
      }
      if (e.role != kRoleGallery && e.role != kRoleProbe && e.role != kRoleDetectorTrain)
        throw data_error("manifest: unknown role '" + e.role + "'");
      if (e.mask && e.mask->size() != e.frames.size())
        throw data_error("manifest: mask length != frame count for " + e.sequence_id);
      m.entries.push_back(std::move(e));
    }
    m.check_unique();
    return m;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write manifest: " + path.string());
    for (const auto& e : entries) {
      nlohmann::ordered_json j;
      j["subject_id"] = e.subject_id;
      j["sequence_id"] = e.sequence_id;
      j["role"] = e.role;
      j["frames"] = e.frames;
      if (e.mask) {
        std::vector<int> mask;
        for (bool b : *e.mask) mask.push_back(b ? 1 : 0);
        j["mask"] = mask;
      }
      out << j.dump() << "\n";
    }
  }

  void check_unique() const {
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& e : entries)
      if (!seen.insert({e.subject_id, e.sequence_id}).second)
        throw data_error("manifest: duplicate (subject, sequence) = (" + e.subject_id + ", " +
                         e.sequence_id + ")");
  }

  std::vector<const ManifestEntry*> with_role(const std::string& role) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries)
      if (e.role == role) out.push_back(&e);
    return out;
  }
};

// Load one sequence. When `normalize_to` is set every frame is normalized to
// that (height, width); otherwise all frames must already share dimensions.
inline SilhouetteSequence load_sequence(const DatasetManifest& manifest, const ManifestEntry& entry,
                                        std::optional<std::pair<int, int>> normalize_to = {}) {
  SilhouetteSequence seq;
  seq.subject_id = entry.subject_id;
  seq.sequence_id = entry.sequence_id;
  seq.frames.reserve(entry.frames.size());
  for (const auto& rel : entry.frames) {
    SilhouetteFrame f = read_pgm(manifest.base_dir / rel);
    if (normalize_to) f = normalize_frame(f, normalize_to->first, normalize_to->second);
    seq.frames.push_back(std::move(f));
  }
  if (entry.mask) seq.occlusion_mask = *entry.mask;
  seq.check();
  return seq;
}

}  // namespace rgait
