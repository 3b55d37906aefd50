// SPDX-License-Identifier: Apache-2.0
#include "radarmesh/train_config.hpp"

#include <torch/torch.h>

#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <sstream>

#include "radarmesh/errors.hpp"
#include "radarmesh/rng.hpp"

namespace radarmesh {

std::string stage_name(Stage s) {
  switch (s) {
    case Stage::hre: return "hre";
    case Stage::teacher: return "teacher";
    case Stage::mmr: return "mmr";
  }
  return "hre";
}

Stage parse_stage(const std::string& s) {
  if (s == "hre") return Stage::hre;
  if (s == "teacher") return Stage::teacher;
  if (s == "mmr") return Stage::mmr;
  throw ConfigError("unknown stage '" + s + "'");
}

std::string Ablation::label() const {
  if (hre_off) return "no-hre";
  if (motion_off && distill_off) return "no-motion,no-distill";
  if (motion_off) return "no-motion";
  if (distill_off) return "no-distill";
  return "full";
}

TrainConfig TrainConfig::defaults(Stage s) {
  TrainConfig c;
  c.stage = s;
  if (s == Stage::hre) return c;
  // teacher and student share the stage-2 schedule
  c.epochs = 25;
  c.lr_init = 2e-4;
  c.lr_decay_every = 5;
  return c;
}

nlohmann::json TrainConfig::to_json() const {
  return {{"stage", stage_name(stage)},
          {"epochs", epochs},
          {"lr_init", lr_init},
          {"lr_decay_factor", lr_decay_factor},
          {"lr_decay_every", lr_decay_every},
          {"batch_size", batch_size},
          {"weight_decay", weight_decay},
          {"lambda_seg", lambda_seg},
          {"lambda_shape", lambda_shape},
          {"lambda_motion", lambda_motion},
          {"ablation", {{"motion_off", ablation.motion_off}, {"distill_off", ablation.distill_off}, {"hre_off", ablation.hre_off}}},
          {"seed", seed},
          {"fraction", fraction},
          {"crop_jitter", crop_jitter}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c = defaults(parse_stage(j.value("stage", std::string("hre"))));
  c.epochs = j.value("epochs", c.epochs);
  c.lr_init = j.value("lr_init", c.lr_init);
  c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
  c.lr_decay_every = j.value("lr_decay_every", c.lr_decay_every);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.lambda_seg = j.value("lambda_seg", c.lambda_seg);
  c.lambda_shape = j.value("lambda_shape", c.lambda_shape);
  c.lambda_motion = j.value("lambda_motion", c.lambda_motion);
  if (j.contains("ablation")) {
    const auto& a = j.at("ablation");
    c.ablation.motion_off = a.value("motion_off", false);
    c.ablation.distill_off = a.value("distill_off", false);
    c.ablation.hre_off = a.value("hre_off", false);
  }
  c.seed = j.value("seed", c.seed);
  c.fraction = j.value("fraction", c.fraction);
  c.crop_jitter = j.value("crop_jitter", c.crop_jitter);
  if (c.epochs < 0 || c.batch_size < 1 || c.lr_decay_every < 1 || !(c.lr_init > 0.0)) {
    throw ConfigError("invalid training schedule");
  }
  if (!(c.fraction > 0.0 && c.fraction <= 1.0)) throw ConfigError("fraction must be in (0, 1]");
  return c;
}

std::string TrainConfig::hash() const {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(to_json().dump());
  return os.str();
}

double lr_at(const TrainConfig& cfg, int epoch) {
  require(epoch >= 0, "epoch must be nonnegative");
  return cfg.lr_init * std::pow(cfg.lr_decay_factor, epoch / cfg.lr_decay_every);
}

bool apply_reference_mode() {
  const char* v = std::getenv("RADARMESH_REFERENCE");
  const bool on = v != nullptr && std::string(v) != "0";
  if (on) {
    torch::set_num_threads(1);
    static const bool interop_once = [] {
      try {
        torch::set_num_interop_threads(1);
      } catch (const c10::Error&) {
        // already fixed by earlier parallel work
      }
      return true;
    }();
    (void)interop_once;
  }
  return on;
}

}  // namespace radarmesh
