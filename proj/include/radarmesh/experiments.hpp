// SPDX-License-Identifier: Apache-2.0
//
// Parameter/MAC accounting, the Stage-2 ablation grid, data-efficiency runs
// and their SVG plots.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "radarmesh/train_hre.hpp"
#include "radarmesh/train_mmr.hpp"

namespace radarmesh {

struct ParamCount {
  std::int64_t localizers = 0;
  std::int64_t segmenter = 0;
  std::int64_t shape_encoder = 0;
  std::int64_t motion_encoder = 0;
  std::int64_t motion_decoder = 0;  // training only
  std::int64_t fusion = 0;
  std::int64_t head = 0;
  std::int64_t teacher = 0;         // training only
  double macs = 0;                  // one inference window

  // Everything used at inference (no flow decoder, no teacher).
  [[nodiscard]] std::int64_t inference_total() const;
  [[nodiscard]] nlohmann::json to_json() const;
};

ParamCount count_params(HreModel& hre, MmrModel& mmr, Teacher* teacher = nullptr);
ParamCount count_params(const HreConfig& hre, const MmrConfig& mmr);

// Stage-2 inputs for train/val/test, prepared once and shared by every run.
struct Stage2Data {
  MmrConfig arch;
  std::vector<Stage2Sample> train, val, test;
  std::vector<Stage2Sample> train_cfar, val_cfar, test_cfar;
  nlohmann::json provenance;  // dataset hashes, checkpoint hashes
};

Stage2Data load_stage2_data(const std::filesystem::path& root, HreModel& hre, Teacher* teacher, bool with_cfar);

struct RunResult {
  Ablation ablation;
  std::uint64_t seed = 0;
  double fraction = 1.0;
  int train_sequences = 0;
  EvalReport test;
  int best_epoch = -1;
  std::string provenance;
};

RunResult run_stage2(const Stage2Data& data, const TrainConfig& cfg);

// Four cells {motion off, distill off} x seeds, plus the CFAR-input full
// model when with_hre_off. Rows hold per-seed MVE and mean/std.
nlohmann::json run_ablation(const Stage2Data& data, const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                            bool with_hre_off);
nlohmann::json run_data_efficiency(const Stage2Data& data, const TrainConfig& base, const std::vector<double>& fractions,
                                   const std::vector<std::uint64_t>& seeds);

// Bar chart of ablation rows / MVE-vs-fraction curve.
std::string ablation_svg(const nlohmann::json& table);
std::string data_efficiency_svg(const nlohmann::json& table);

}  // namespace radarmesh
