// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

namespace radarmesh {

enum class Stage { hre, teacher, mmr };

std::string stage_name(Stage s);
Stage parse_stage(const std::string& s);

struct Ablation {
  bool motion_off = false;
  bool distill_off = false;
  bool hre_off = false;

  [[nodiscard]] std::string label() const;
  bool operator==(const Ablation&) const = default;
};

struct TrainConfig {
  Stage stage = Stage::hre;
  int epochs = 50;
  double lr_init = 1e-3;
  double lr_decay_factor = 0.5;
  int lr_decay_every = 10;
  int batch_size = 32;
  double weight_decay = 1e-3;
  double lambda_seg = 1e-2;
  double lambda_shape = 10.0;
  double lambda_motion = 500.0;
  Ablation ablation;
  std::uint64_t seed = 0;
  double fraction = 1.0;
  int crop_jitter = 2;  // voxels, stage-1 segmenter crops
  bool verbose = false;  // progress on stderr, not serialized

  static TrainConfig defaults(Stage s);
  [[nodiscard]] nlohmann::json to_json() const;
  // Missing keys keep the stage defaults.
  static TrainConfig from_json(const nlohmann::json& j);
  [[nodiscard]] std::string hash() const;
};

// lr_init * factor^floor(epoch / every).
double lr_at(const TrainConfig& cfg, int epoch);

// Reference mode (env RADARMESH_REFERENCE set to anything but "0") pins
// torch to one thread. Returns whether it is active.
bool apply_reference_mode();

}  // namespace radarmesh
