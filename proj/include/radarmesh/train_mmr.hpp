// SPDX-License-Identifier: Apache-2.0
//
// Stage-2 sample preparation (Stage-1 extraction or the CFAR baseline),
// teacher and student training, evaluation and checkpoints.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "radarmesh/dataset.hpp"
#include "radarmesh/metrics.hpp"
#include "radarmesh/mmr.hpp"
#include "radarmesh/train_config.hpp"

namespace radarmesh {

// Full widths on the default grid, small widths otherwise.
MmrConfig mmr_config_for(const SceneConfig& scene);

struct CfarConfig {
  Index3 guard{1, 1, 1};
  Index3 train{3, 3, 2};
  double rate = 3.0;
};

// One dense-surface frame for the teacher.
struct TeacherSample {
  torch::Tensor points;  // (N_t, 3), centered at `center`
  GroupingPlan plan;
  torch::Tensor center;  // (3,)
  torch::Tensor gt;      // (82,)
  double gt_g = 1.0;
  BodyParams gt_params;
};

struct Stage2Sample {
  std::string name;
  std::string provenance;  // "hre" or "cfar"
  torch::Tensor points;    // (T, K, 5), xyz centered per frame
  std::vector<GroupingPlan> plans;
  torch::Tensor centers;   // (T, 3) world frame
  torch::Tensor diff;      // (T-1, X', Y', Z')
  Index3 roi_origin{0, 0, 0};
  torch::Tensor flow_gt;   // (3, X', Y', Z') on the same RoI
  torch::Tensor gt;        // (82,) last frame
  double gt_g = 1.0;
  BodyParams gt_params;
  std::vector<TeacherSample> teacher;  // one per frame
  torch::Tensor teacher_tokens;        // (T, d_s) once attached
};

std::vector<TeacherSample> teacher_samples(const LabeledSequence& seq, const MmrConfig& arch);
std::vector<TeacherSample> teacher_samples(const Split& split, const MmrConfig& arch);

// hre == nullptr selects the CFAR baseline: CFAR points for the shape branch
// and raw intensities on a RoI around their intensity-weighted centroid for
// the motion branch.
Stage2Sample prepare_sample(const LabeledSequence& seq, HreModel* hre, const MmrConfig& arch,
                            const CfarConfig& cfar = {});
std::vector<Stage2Sample> prepare_samples(const Split& split, HreModel* hre, const MmrConfig& arch,
                                          const CfarConfig& cfar = {});

MmrBatch collate(const std::vector<const Stage2Sample*>& batch, const MmrConfig& arch);

struct TeacherTrainResult {
  Teacher model{nullptr};
  nlohmann::json log = nlohmann::json::array();
  double best_val_mve = -1.0;
  int best_epoch = -1;
};

TeacherTrainResult train_teacher(const TrainConfig& cfg, const MmrConfig& arch, const std::vector<TeacherSample>& train,
                                 const std::vector<TeacherSample>* val, const std::filesystem::path& dump_dir = {});
EvalReport evaluate_teacher(Teacher& teacher, const std::vector<TeacherSample>& samples);

// Frozen-teacher tokens for every frame of every sample.
void attach_teacher_tokens(std::vector<Stage2Sample>& samples, Teacher& teacher);

struct MmrTrainResult {
  MmrModel model{nullptr};
  nlohmann::json log = nlohmann::json::array();
  double best_val_mve = -1.0;
  int best_epoch = -1;
};

// Requires teacher tokens on every training sample unless distillation is off.
MmrTrainResult train_mmr(const TrainConfig& cfg, const MmrConfig& arch, const std::vector<Stage2Sample>& train,
                         const std::vector<Stage2Sample>* val, const std::filesystem::path& dump_dir = {});

struct Prediction {
  std::string name;
  BodyParams params;
};
std::vector<Prediction> predict_mmr(MmrModel& model, const std::vector<Stage2Sample>& samples, bool motion_on);
EvalReport evaluate_mmr(MmrModel& model, const std::vector<Stage2Sample>& samples, bool motion_on);

void save_teacher(const std::filesystem::path& path, Teacher& model, const nlohmann::json& meta);
Teacher load_teacher(const std::filesystem::path& path, nlohmann::json* meta = nullptr);
void save_mmr(const std::filesystem::path& path, MmrModel& model, const nlohmann::json& meta);
MmrModel load_mmr(const std::filesystem::path& path, nlohmann::json* meta = nullptr);

}  // namespace radarmesh
