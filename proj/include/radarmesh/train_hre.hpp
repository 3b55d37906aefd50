// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include <json.hpp>

#include "radarmesh/dataset.hpp"
#include "radarmesh/hre.hpp"
#include "radarmesh/train_config.hpp"

namespace radarmesh {

// Full widths on the default grid, small widths otherwise.
HreConfig hre_config_for(const SceneConfig& scene);

struct HreEval {
  double dice = 0.0;                // mean per-frame Dice on the shared RoI, threshold 0.5
  double median_center_error = 0.0;  // voxels
  double mean_center_error = 0.0;    // meters
  int n_frames = 0;

  [[nodiscard]] nlohmann::json to_json() const;
};

HreEval evaluate_hre(HreModel& model, const Split& split);

struct HreTrainResult {
  HreModel model{nullptr};
  nlohmann::json log = nlohmann::json::array();
  double best_val_dice = -1.0;
  int best_epoch = -1;
};

// Joint training of localizers and segmenter under L_loc + lambda_seg * L_seg.
// The checkpoint kept is the epoch with the best validation Dice (last epoch
// when no validation split is given). NaN losses dump the batch to dump_dir.
HreTrainResult train_hre(const TrainConfig& cfg, const HreConfig& arch, const Split& train, const Split* val,
                         const std::filesystem::path& dump_dir = {});

void save_hre(const std::filesystem::path& path, HreModel& model, const nlohmann::json& meta);
HreModel load_hre(const std::filesystem::path& path, nlohmann::json* meta = nullptr);

nlohmann::json hre_config_to_json(const HreConfig& c);
HreConfig hre_config_from_json(const nlohmann::json& j);

}  // namespace radarmesh
