// SPDX-License-Identifier: Apache-2.0
#include "radarmesh/train_hre.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <random>

#include "radarmesh/checkpoint.hpp"
#include "radarmesh/errors.hpp"
#include "radarmesh/rng.hpp"

namespace radarmesh {

namespace fs = std::filesystem;
using nlohmann::json;

HreConfig hre_config_for(const SceneConfig& scene) {
  HreConfig c = scene.grid.dims == GridSpec{}.dims ? HreConfig::full() : HreConfig::tiny();
  c.grid_dims = scene.grid.dims;
  c.roi_dims = scene.roi_dims;
  return c;
}

json hre_config_to_json(const HreConfig& c) {
  return {{"grid_dims", c.grid_dims}, {"roi_dims", c.roi_dims}, {"loc_width", c.loc_width}, {"seg_base", c.seg_base}};
}

HreConfig hre_config_from_json(const json& j) {
  HreConfig c;
  c.grid_dims = j.at("grid_dims").get<Index3>();
  c.roi_dims = j.at("roi_dims").get<Index3>();
  c.loc_width = j.at("loc_width").get<int>();
  c.seg_base = j.at("seg_base").get<int>();
  return c;
}

json HreEval::to_json() const {
  return {{"dice", dice}, {"median_center_error_vox", median_center_error}, {"mean_center_error_m", mean_center_error},
          {"n_frames", n_frames}};
}

HreEval evaluate_hre(HreModel& model, const Split& split) {
  model->eval();
  torch::NoGradGuard ng;
  HreEval e;
  std::vector<double> errs;
  double dice_sum = 0.0;
  for (const auto& seq : split.sequences) {
    const GridSpec& g = seq.grid;
    std::vector<torch::Tensor> fs;
    for (const auto& f : seq.frames) fs.push_back(volume_to_tensor(f));
    const auto vox = model->localize(torch::stack(fs)).to(torch::kFloat64).contiguous();
    for (int t = 0; t < seq.window(); ++t) {
      const Vec3 c(vox[t][0].item<double>(), vox[t][1].item<double>(), vox[t][2].item<double>());
      const Vec3 p = g.from_voxel_coords(clamp_voxel_coords(c, g.dims));
      const double d = (p - seq.gt_center[t]).norm();
      e.mean_center_error += d;
      errs.push_back(d / g.voxel_size.x());
    }
    const auto refl = extract(seq.frames, g, model);
    for (int t = 0; t < seq.window(); ++t) {
      const auto gt = crop_occupancy(seq.occupancy[t].values, refl[t].roi_origin_voxel, refl[t].probs.dims);
      dice_sum += dice_score(refl[t].probs, gt);
    }
    e.n_frames += seq.window();
  }
  if (e.n_frames > 0) {
    e.dice = dice_sum / e.n_frames;
    e.mean_center_error /= e.n_frames;
    std::sort(errs.begin(), errs.end());
    const std::size_t n = errs.size();
    e.median_center_error = n % 2 ? errs[n / 2] : 0.5 * (errs[n / 2 - 1] + errs[n / 2]);
  }
  return e;
}

namespace {

struct FrameRef {
  int seq;
  int t;
};

void dump_batch(const fs::path& dir, int epoch, int step, const torch::Tensor& frames, const torch::Tensor& targets,
                const std::string& why) {
  if (dir.empty()) throw NanLossError(why + " (no dump directory configured)");
  ArrayContainer c;
  put_tensor(c, "frames", frames);
  put_tensor(c, "targets", targets);
  c.meta = {{"epoch", epoch}, {"step", step}, {"reason", why}};
  const fs::path p = dir / ("nan_batch_e" + std::to_string(epoch) + "_s" + std::to_string(step) + ".rmt");
  write_container(p, c);
  throw NanLossError(why + "; batch written to " + p.string());
}

}  // namespace

HreTrainResult train_hre(const TrainConfig& cfg, const HreConfig& arch, const Split& train, const Split* val,
                         const fs::path& dump_dir) {
  require(cfg.stage == Stage::hre, "train_hre needs a stage-1 config");
  require(!train.sequences.empty(), "empty training split");
  torch::manual_seed(cfg.seed);
  HreTrainResult res;
  res.model = HreModel(arch);
  HreModel& model = res.model;
  const GridSpec grid = train.sequences.front().grid;
  require(grid.dims == arch.grid_dims, "dataset grid does not match the model");

  std::vector<FrameRef> refs;
  for (int s = 0; s < static_cast<int>(train.sequences.size()); ++s)
    for (int t = 0; t < train.sequences[s].window(); ++t) refs.push_back({s, t});
  const auto sub = subset_indices(static_cast<int>(train.sequences.size()), cfg.fraction, cfg.seed);
  if (cfg.fraction < 1.0) {
    std::vector<FrameRef> kept;
    for (const auto& r : refs)
      if (std::binary_search(sub.begin(), sub.end(), r.seq)) kept.push_back(r);
    refs = kept;
  }
  if (static_cast<int>(refs.size()) < cfg.batch_size) throw ConfigError("training set smaller than one batch");

  torch::optim::AdamW opt(model->parameters(),
                          torch::optim::AdamWOptions(cfg.lr_init).weight_decay(cfg.weight_decay));
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x57a9e1));
  StateSnapshot best;
  const Index3 roi = arch.roi_dims;
  const Vec3 vs = grid.voxel_size;
  const auto origin_t = torch::tensor({grid.origin.x(), grid.origin.y(), grid.origin.z()}, torch::kFloat32);
  const auto vs_t = torch::tensor({vs.x(), vs.y(), vs.z()}, torch::kFloat32);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at(cfg, epoch);
    for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);
    std::shuffle(refs.begin(), refs.end(), rng);
    model->train();
    double sum_loss = 0, sum_loc = 0, sum_seg = 0, sum_bce = 0, sum_dice = 0;
    int steps = 0;
    std::uniform_int_distribution<int> jit(-cfg.crop_jitter, cfg.crop_jitter);
    for (std::size_t b0 = 0; b0 + cfg.batch_size <= refs.size(); b0 += cfg.batch_size) {
      std::vector<torch::Tensor> frames, crops, occs;
      std::vector<float> targets;
      for (int k = 0; k < cfg.batch_size; ++k) {
        const FrameRef r = refs[b0 + k];
        const auto& seq = train.sequences[r.seq];
        const FloatVolume& f = seq.frames[r.t];
        frames.push_back(volume_to_tensor(f));
        const Vec3 c = seq.gt_center[r.t];
        for (int a = 0; a < 3; ++a) targets.push_back(static_cast<float>(c[a]));
        Index3 cv = grid.raw_index(c);
        for (int a = 0; a < 3; ++a) cv[a] = std::clamp(cv[a] + jit(rng), 0, grid.dims[a] - 1);
        const Index3 o = roi_origin_for(grid, cv, roi);
        crops.push_back(volume_to_tensor(crop_roi_at(f, grid, o, roi).values));
        const auto occ = crop_occupancy(seq.occupancy[r.t].values, o, roi);
        occs.push_back(torch::from_blob(const_cast<std::uint8_t*>(occ.data.data()), {roi[0], roi[1], roi[2]},
                                        torch::kUInt8)
                           .to(torch::kFloat32));
      }
      const auto x = torch::stack(frames);
      const auto p_gt = torch::from_blob(targets.data(), {cfg.batch_size, 3}, torch::kFloat32).clone();
      const auto vox = model->localize(x);
      const auto p_hat = origin_t + (vox + 0.5) * vs_t;
      const auto l_loc = loc_loss(p_hat, p_gt).mean();
      const auto probs = torch::sigmoid(model->segment_logits(torch::stack(crops).unsqueeze(1)));
      const auto seg = seg_loss(probs, torch::stack(occs).unsqueeze(1));
      const auto loss = hre_loss(l_loc, seg.total, cfg.lambda_seg);
      if (!std::isfinite(loss.item<double>())) dump_batch(dump_dir, epoch, steps, x, p_gt, "non-finite stage-1 loss");
      opt.zero_grad();
      loss.backward();
      opt.step();
      sum_loss += loss.item<double>();
      sum_loc += l_loc.item<double>();
      sum_seg += seg.total.item<double>();
      sum_bce += seg.bce.item<double>();
      sum_dice += seg.dice.item<double>();
      ++steps;
    }
    json entry = {{"epoch", epoch},
                  {"lr", lr},
                  {"loss", sum_loss / steps},
                  {"loc", sum_loc / steps},
                  {"seg", sum_seg / steps},
                  {"bce", sum_bce / steps},
                  {"dice_loss", sum_dice / steps}};
    if (val != nullptr && !val->sequences.empty()) {
      const HreEval e = evaluate_hre(model, *val);
      entry["val"] = e.to_json();
      if (e.dice > res.best_val_dice) {
        res.best_val_dice = e.dice;
        res.best_epoch = epoch;
        best = snapshot(*model);
      }
    }
    entry["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.log.push_back(entry);
    if (cfg.verbose) std::cerr << "hre epoch " << epoch << " " << entry.dump() << std::endl;
  }
  if (!best.empty()) {
    restore(*model, best);
  } else {
    res.best_epoch = cfg.epochs - 1;
  }
  model->eval();
  return res;
}

void save_hre(const fs::path& path, HreModel& model, const json& meta) {
  ArrayContainer c;
  put_module(c, "", *model);
  c.meta = meta;
  c.meta["kind"] = "hre";
  c.meta["arch"] = hre_config_to_json(model->cfg);
  c.meta["arch_hash"] = std::to_string(fnv1a(hre_config_to_json(model->cfg).dump()));
  write_container(path, c);
}

HreModel load_hre(const fs::path& path, json* meta) {
  if (!fs::exists(path)) throw PipelineOrderError("stage-1 checkpoint " + path.string() + " does not exist");
  const ArrayContainer c = read_container(path);
  if (c.meta.value("kind", "") != "hre") throw IoError(path.string() + " is not a stage-1 checkpoint");
  HreModel m(hre_config_from_json(c.meta.at("arch")));
  get_module(c, "", *m);
  m->eval();
  if (meta != nullptr) *meta = c.meta;
  return m;
}

}  // namespace radarmesh
