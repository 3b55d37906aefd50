// SPDX-License-Identifier: Apache-2.0
//
// Synthetic dataset profiles and on-disk splits: one directory per split
// holding manifest.json plus one RMT1 record per sequence.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "radarmesh/container.hpp"
#include "radarmesh/scene_sim.hpp"

namespace radarmesh {

struct DatasetProfile {
  std::string name = "tiny";
  SceneConfig scene;
  int n_train = 200;
  int n_val = 20;
  int n_test = 40;
  int n_subjects = 10;

  // "default": full-size grid, 2000/200/400.
  // "tiny": half-resolution grid, 200/20/40.
  // "bench": tiny grid with fewer sequences, sized for repeated CPU runs.
  static DatasetProfile by_name(const std::string& name);
  [[nodiscard]] int count(const std::string& split) const;
};

struct Subject {
  BetaVector beta = BetaVector::Zero();
  double gender = 1.0;
};

std::vector<Subject> make_subjects(int n, std::uint64_t seed);

nlohmann::json grid_to_json(const GridSpec& g);
GridSpec grid_from_json(const nlohmann::json& j);
nlohmann::json scene_to_json(const SceneConfig& s);
SceneConfig scene_from_json(const nlohmann::json& j);

ArrayContainer sequence_to_container(const LabeledSequence& seq);
// Meshes are rebuilt from the stored parameters; visibility lists are not stored.
LabeledSequence sequence_from_container(const ArrayContainer& c, const BodyModel& body);

struct SplitInfo {
  std::string profile;
  std::string split;
  SceneConfig scene;
  std::uint64_t seed = 0;
  std::vector<std::string> files;
  std::vector<std::string> actions;
  std::vector<int> subjects;
  std::string content_hash;
};

// Writes <dir>/manifest.json and <dir>/seq_NNNNN.rmt. `count` < 0 uses the profile's count.
SplitInfo generate_split(const std::filesystem::path& dir, const DatasetProfile& profile,
                         const std::string& split, std::uint64_t seed, int count = -1);

// Generates train/val/test under root/<split>.
void generate_dataset(const std::filesystem::path& root, const DatasetProfile& profile,
                      std::uint64_t seed);

SplitInfo read_manifest(const std::filesystem::path& dir);

struct Split {
  SplitInfo info;
  std::vector<LabeledSequence> sequences;
};

Split load_split(const std::filesystem::path& dir, const BodyModel& body = default_body_model());

// First ceil(fraction * n) entries of a fixed seeded permutation, so smaller
// fractions are prefixes (nested subsets) of larger ones.
std::vector<int> subset_indices(int n, double fraction, std::uint64_t seed);

// FNV-1a over file names and bytes of every record in the split.
std::string hash_split_files(const std::filesystem::path& dir, const std::vector<std::string>& files);

}  // namespace radarmesh
