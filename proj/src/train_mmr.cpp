// SPDX-License-Identifier: Apache-2.0
#include "radarmesh/train_mmr.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>

#include "radarmesh/checkpoint.hpp"
#include "radarmesh/errors.hpp"
#include "radarmesh/rng.hpp"

namespace radarmesh {

namespace fs = std::filesystem;
using nlohmann::json;

MmrConfig mmr_config_for(const SceneConfig& scene) {
  MmrConfig c = scene.grid.dims == GridSpec{}.dims ? MmrConfig::full() : MmrConfig::tiny();
  c.roi_dims = scene.roi_dims;
  c.window = scene.window;
  c.k = scene.teacher_points;
  return c;
}

namespace {

torch::Tensor params_tensor(const BodyParams& p) {
  const auto v = p.to_vector();
  return torch::tensor(std::vector<double>(v.begin(), v.begin() + kNumContinuousParams), torch::kFloat64)
      .to(torch::kFloat32);
}

torch::Tensor points_tensor(const Points& p) {
  return torch::from_blob(const_cast<double*>(p.data()), {p.rows(), 3}, torch::kFloat64).to(torch::kFloat32);
}

torch::Tensor vec_tensor(const Vec3& v) { return torch::tensor({v.x(), v.y(), v.z()}, torch::kFloat64).to(torch::kFloat32); }

torch::Tensor flow_tensor(const FlowVolume& f) {
  return torch::stack({volume_to_tensor(f.values[0]), volume_to_tensor(f.values[1]), volume_to_tensor(f.values[2])});
}

}  // namespace

std::vector<TeacherSample> teacher_samples(const LabeledSequence& seq, const MmrConfig& arch) {
  require(static_cast<int>(seq.teacher_points.size()) == seq.window(), "sequence has no dense teacher points");
  std::vector<TeacherSample> out;
  for (int t = 0; t < seq.window(); ++t) {
    const Points& pts = seq.teacher_points[t];
    require(pts.rows() == arch.k, "teacher point count must equal K");
    const Vec3 c = pts.colwise().mean().transpose();
    const Points centered = pts.rowwise() - c.transpose();
    TeacherSample s;
    s.points = points_tensor(centered);
    s.plan = plan_grouping(centered, arch);
    s.center = vec_tensor(c);
    s.gt = params_tensor(seq.params[t]);
    s.gt_g = seq.params[t].g;
    s.gt_params = seq.params[t];
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<TeacherSample> teacher_samples(const Split& split, const MmrConfig& arch) {
  std::vector<TeacherSample> out;
  for (const auto& seq : split.sequences) {
    auto s = teacher_samples(seq, arch);
    std::move(s.begin(), s.end(), std::back_inserter(out));
  }
  return out;
}

Stage2Sample prepare_sample(const LabeledSequence& seq, HreModel* hre, const MmrConfig& arch, const CfarConfig& cfar) {
  const int t_len = seq.window();
  require(t_len == arch.window, "sequence length does not match the window");
  const GridSpec& grid = seq.grid;
  std::vector<PointSet5> ps;
  std::vector<torch::Tensor> vols;
  Stage2Sample s;
  if (hre != nullptr) {
    const auto refl = extract(seq.frames, grid, *hre);
    s.roi_origin = refl.back().roi_origin_voxel;
    for (const auto& r : refl) {
      ps.push_back(select_topk_points(r, arch.k));
      vols.push_back(volume_to_tensor(r.probs));
    }
    s.provenance = "hre";
  } else {
    for (const auto& f : seq.frames) {
      const auto det = cfar_extract(f, grid, cfar.guard, cfar.train, cfar.rate);
      ps.push_back(select_cfar_points(det, f, grid, arch.k));
    }
    const auto& last = ps.back().points;
    const auto w = last.col(3);
    const Vec3 c = w.sum() > 0 ? Vec3((last.leftCols<3>().transpose() * w) / w.sum())
                               : Vec3(last.leftCols<3>().colwise().mean().transpose());
    s.roi_origin = crop_roi(seq.frames.back(), grid, c, arch.roi_dims).roi_origin_voxel;
    for (const auto& f : seq.frames) vols.push_back(volume_to_tensor(crop_roi_at(f, grid, s.roi_origin, arch.roi_dims).values));
    s.provenance = "cfar";
  }
  std::vector<torch::Tensor> pts, centers;
  for (auto& p : ps) {
    const Vec3 c = point_centroid(p);
    PointSet5 centered = p;
    centered.points.leftCols<3>().rowwise() -= c.transpose();
    s.plans.push_back(plan_grouping(centered.xyz(), arch));
    auto t = torch::empty({centered.size(), 5}, torch::kFloat64);
    std::copy(centered.points.data(), centered.points.data() + centered.points.size(), t.data_ptr<double>());
    pts.push_back(t.to(torch::kFloat32));
    centers.push_back(vec_tensor(c));
  }
  s.points = torch::stack(pts);
  s.centers = torch::stack(centers);
  s.diff = difference_volume(torch::stack(vols).unsqueeze(0))[0];
  const GridSpec roi_grid = grid.sub_grid(s.roi_origin, arch.roi_dims);
  s.flow_gt = flow_tensor(make_scene_flow_gt(seq.meshes[t_len - 2], seq.meshes[t_len - 1], roi_grid, seq.sensor_pos));
  s.gt_params = seq.params.back();
  s.gt = params_tensor(s.gt_params);
  s.gt_g = s.gt_params.g;
  s.teacher = teacher_samples(seq, arch);
  s.name = seq.action + "_" + std::to_string(seq.seed);
  return s;
}

std::vector<Stage2Sample> prepare_samples(const Split& split, HreModel* hre, const MmrConfig& arch,
                                          const CfarConfig& cfar) {
  torch::NoGradGuard ng;
  if (hre != nullptr) (*hre)->eval();
  std::vector<Stage2Sample> out;
  for (std::size_t i = 0; i < split.sequences.size(); ++i) {
    out.push_back(prepare_sample(split.sequences[i], hre, arch, cfar));
    if (i < split.info.files.size()) out.back().name = split.info.files[i];
  }
  return out;
}

MmrBatch collate(const std::vector<const Stage2Sample*>& batch, const MmrConfig& arch) {
  std::vector<torch::Tensor> pts, centers, diffs;
  std::vector<GroupingPlan> plans;
  for (const auto* s : batch) {
    pts.push_back(s->points);
    centers.push_back(s->centers);
    diffs.push_back(s->diff);
    plans.insert(plans.end(), s->plans.begin(), s->plans.end());
  }
  MmrBatch b;
  b.points = torch::stack(pts);
  b.plan = PlanTensors::stack(plans, arch);
  b.centers = torch::stack(centers);
  b.diff = torch::stack(diffs);
  return b;
}

namespace {

void check_finite(const torch::Tensor& loss, const fs::path& dump_dir, int epoch, int step,
                  const std::vector<std::pair<std::string, torch::Tensor>>& tensors, const std::string& why) {
  if (std::isfinite(loss.item<double>())) return;
  if (dump_dir.empty()) throw NanLossError(why + " (no dump directory configured)");
  ArrayContainer c;
  for (const auto& [name, t] : tensors) put_tensor(c, name, t.detach());
  c.meta = {{"epoch", epoch}, {"step", step}, {"reason", why}};
  const fs::path p = dump_dir / ("nan_batch_e" + std::to_string(epoch) + "_s" + std::to_string(step) + ".rmt");
  write_container(p, c);
  throw NanLossError(why + "; batch written to " + p.string());
}

void set_lr(torch::optim::AdamW& opt, double lr) {
  for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);
}

EvalReport evaluate_rows(const torch::Tensor& params, const torch::Tensor& g, const std::vector<BodyParams>& gt,
                         const std::vector<std::string>& names) {
  std::vector<FrameMetrics> frames;
  for (std::int64_t i = 0; i < params.size(0); ++i) {
    FrameMetrics f = evaluate_frame(params_from_row(params[i], g[i].item<double>()), gt[i]);
    f.sequence = names[i];
    f.frame = 0;
    frames.push_back(f);
  }
  return EvalReport::aggregate(std::move(frames));
}

}  // namespace

TeacherTrainResult train_teacher(const TrainConfig& cfg, const MmrConfig& arch, const std::vector<TeacherSample>& train,
                                 const std::vector<TeacherSample>* val, const fs::path& dump_dir) {
  require(cfg.stage == Stage::teacher, "train_teacher needs a teacher config");
  if (static_cast<int>(train.size()) < cfg.batch_size) throw ConfigError("training set smaller than one batch");
  torch::manual_seed(cfg.seed);
  TeacherTrainResult res;
  res.model = Teacher(arch);
  Teacher& model = res.model;
  const BodyLayer body(default_body_model());
  torch::optim::AdamW opt(model->parameters(), torch::optim::AdamWOptions(cfg.lr_init).weight_decay(cfg.weight_decay));
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x7eac4e));
  std::vector<int> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  StateSnapshot best;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    set_lr(opt, lr_at(cfg, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    model->train();
    double sum = 0;
    int steps = 0;
    for (std::size_t b0 = 0; b0 + cfg.batch_size <= order.size(); b0 += cfg.batch_size) {
      std::vector<torch::Tensor> pts, centers, gts;
      std::vector<GroupingPlan> plans;
      std::vector<float> gs;
      for (int k = 0; k < cfg.batch_size; ++k) {
        const auto& s = train[order[b0 + k]];
        pts.push_back(s.points);
        centers.push_back(s.center);
        gts.push_back(s.gt);
        plans.push_back(s.plan);
        gs.push_back(static_cast<float>(s.gt_g));
      }
      const auto x = torch::stack(pts);
      const auto gt = torch::stack(gts);
      const auto g = torch::tensor(gs);
      const auto out = model->forward(x, PlanTensors::stack(plans, arch), torch::stack(centers));
      const auto loss = smpl_loss(out.params, out.g, gt, g, body).total;
      check_finite(loss, dump_dir, epoch, steps, {{"points", x}, {"gt", gt}}, "non-finite teacher loss");
      opt.zero_grad();
      loss.backward();
      opt.step();
      sum += loss.item<double>();
      ++steps;
    }
    json entry = {{"epoch", epoch}, {"lr", lr_at(cfg, epoch)}, {"loss", sum / steps}};
    if (val != nullptr && !val->empty()) {
      const EvalReport r = evaluate_teacher(model, *val);
      entry["val"] = r.to_json();
      if (res.best_val_mve < 0 || r.mve < res.best_val_mve) {
        res.best_val_mve = r.mve;
        res.best_epoch = epoch;
        best = snapshot(*model);
      }
    }
    entry["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.log.push_back(entry);
    if (cfg.verbose) std::cerr << "teacher epoch " << epoch << " " << entry.dump() << std::endl;
  }
  if (!best.empty()) {
    restore(*model, best);
  } else {
    res.best_epoch = cfg.epochs - 1;
  }
  model->eval();
  return res;
}

EvalReport evaluate_teacher(Teacher& teacher, const std::vector<TeacherSample>& samples) {
  teacher->eval();
  torch::NoGradGuard ng;
  const MmrConfig& arch = teacher->cfg;
  std::vector<FrameMetrics> frames;
  for (std::size_t b0 = 0; b0 < samples.size(); b0 += 64) {
    const std::size_t b1 = std::min(samples.size(), b0 + 64);
    std::vector<torch::Tensor> pts, centers;
    std::vector<GroupingPlan> plans;
    std::vector<BodyParams> gt;
    std::vector<std::string> names;
    for (std::size_t i = b0; i < b1; ++i) {
      pts.push_back(samples[i].points);
      centers.push_back(samples[i].center);
      plans.push_back(samples[i].plan);
      gt.push_back(samples[i].gt_params);
      names.push_back("frame_" + std::to_string(i));
    }
    const auto out = teacher->forward(torch::stack(pts), PlanTensors::stack(plans, arch), torch::stack(centers));
    auto r = evaluate_rows(out.params, out.g, gt, names);
    frames.insert(frames.end(), r.per_frame.begin(), r.per_frame.end());
  }
  return EvalReport::aggregate(std::move(frames));
}

void attach_teacher_tokens(std::vector<Stage2Sample>& samples, Teacher& teacher) {
  teacher->eval();
  torch::NoGradGuard ng;
  for (auto& s : samples) {
    std::vector<torch::Tensor> pts, centers;
    std::vector<GroupingPlan> plans;
    for (const auto& t : s.teacher) {
      pts.push_back(t.points);
      centers.push_back(t.center);
      plans.push_back(t.plan);
    }
    s.teacher_tokens = teacher->forward(torch::stack(pts), PlanTensors::stack(plans, teacher->cfg), torch::stack(centers)).token;
  }
}

MmrTrainResult train_mmr(const TrainConfig& cfg, const MmrConfig& arch, const std::vector<Stage2Sample>& all,
                         const std::vector<Stage2Sample>* val, const fs::path& dump_dir) {
  require(cfg.stage == Stage::mmr, "train_mmr needs a stage-2 config");
  const bool motion_on = !cfg.ablation.motion_off;
  const bool distill = !cfg.ablation.distill_off;
  const std::string want = cfg.ablation.hre_off ? "cfar" : "hre";
  std::vector<const Stage2Sample*> train;
  for (int i : subset_indices(static_cast<int>(all.size()), cfg.fraction, cfg.seed)) train.push_back(&all[i]);
  for (const auto* s : train) {
    if (distill && !s->teacher_tokens.defined()) throw PipelineOrderError("stage-2 training needs teacher tokens; train the teacher first");
    if (s->provenance != want) throw ConfigError("samples come from " + s->provenance + " but the config expects " + want);
  }
  if (static_cast<int>(train.size()) < cfg.batch_size) throw ConfigError("training set smaller than one batch");

  torch::manual_seed(cfg.seed);
  MmrTrainResult res;
  res.model = MmrModel(arch);
  MmrModel& model = res.model;
  const BodyLayer body(default_body_model());
  MmrLossWeights w;
  w.lambda_shape = cfg.lambda_shape;
  w.lambda_motion = cfg.lambda_motion;
  w.motion_off = !motion_on;
  w.distill_off = !distill;
  torch::optim::AdamW opt(model->parameters(), torch::optim::AdamWOptions(cfg.lr_init).weight_decay(cfg.weight_decay));
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x5e9a2));
  StateSnapshot best;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    set_lr(opt, lr_at(cfg, epoch));
    std::shuffle(train.begin(), train.end(), rng);
    model->train();
    double sum = 0, sum_smpl = 0, sum_shape = 0, sum_motion = 0, sum_joints = 0;
    int steps = 0;
    for (std::size_t b0 = 0; b0 + cfg.batch_size <= train.size(); b0 += cfg.batch_size) {
      const std::vector<const Stage2Sample*> items(train.begin() + b0, train.begin() + b0 + cfg.batch_size);
      const MmrBatch b = collate(items, arch);
      std::vector<torch::Tensor> gts, flows, tokens;
      std::vector<float> gs;
      for (const auto* s : items) {
        gts.push_back(s->gt);
        gs.push_back(static_cast<float>(s->gt_g));
        if (motion_on) flows.push_back(s->flow_gt);
        if (distill) tokens.push_back(s->teacher_tokens);
      }
      const auto gt = torch::stack(gts);
      const auto out = model->forward(b, motion_on);
      const auto smpl = smpl_loss(out.params, out.g, gt, torch::tensor(gs), body);
      std::optional<torch::Tensor> l_shape, l_motion;
      if (distill) l_shape = shape_distill_loss(out.shape_tokens, torch::stack(tokens));
      if (motion_on) l_motion = motion_loss(*out.flow, torch::stack(flows));
      const auto loss = mmr_loss(smpl.total, l_shape, l_motion, w);
      check_finite(loss, dump_dir, epoch, steps, {{"points", b.points}, {"diff", b.diff}, {"gt", gt}},
                   "non-finite stage-2 loss");
      opt.zero_grad();
      loss.backward();
      opt.step();
      sum += loss.item<double>();
      sum_smpl += smpl.total.item<double>();
      sum_joints += smpl.joints.item<double>();
      if (l_shape) sum_shape += l_shape->item<double>();
      if (l_motion) sum_motion += l_motion->item<double>();
      ++steps;
    }
    json entry = {{"epoch", epoch},
                  {"lr", lr_at(cfg, epoch)},
                  {"loss", sum / steps},
                  {"smpl", sum_smpl / steps},
                  {"joints", sum_joints / steps},
                  {"shape", sum_shape / steps},
                  {"motion", sum_motion / steps}};
    if (val != nullptr && !val->empty()) {
      const EvalReport r = evaluate_mmr(model, *val, motion_on);
      entry["val"] = r.to_json();
      if (res.best_val_mve < 0 || r.mve < res.best_val_mve) {
        res.best_val_mve = r.mve;
        res.best_epoch = epoch;
        best = snapshot(*model);
      }
    }
    entry["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.log.push_back(entry);
    if (cfg.verbose) std::cerr << "mmr epoch " << epoch << " " << entry.dump() << std::endl;
  }
  if (!best.empty()) {
    restore(*model, best);
  } else {
    res.best_epoch = cfg.epochs - 1;
  }
  model->eval();
  return res;
}

std::vector<Prediction> predict_mmr(MmrModel& model, const std::vector<Stage2Sample>& samples, bool motion_on) {
  model->eval();
  torch::NoGradGuard ng;
  std::vector<Prediction> out;
  for (std::size_t b0 = 0; b0 < samples.size(); b0 += 32) {
    std::vector<const Stage2Sample*> items;
    for (std::size_t i = b0; i < std::min(samples.size(), b0 + 32); ++i) items.push_back(&samples[i]);
    const auto o = model->forward(collate(items, model->cfg), motion_on);
    for (std::size_t i = 0; i < items.size(); ++i) {
      out.push_back({items[i]->name, params_from_row(o.params[static_cast<std::int64_t>(i)],
                                                     o.g[static_cast<std::int64_t>(i)].item<double>())});
    }
  }
  return out;
}

EvalReport evaluate_mmr(MmrModel& model, const std::vector<Stage2Sample>& samples, bool motion_on) {
  const auto preds = predict_mmr(model, samples, motion_on);
  std::vector<FrameMetrics> frames;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    FrameMetrics f = evaluate_frame(preds[i].params, samples[i].gt_params);
    f.sequence = preds[i].name;
    f.frame = samples[i].teacher.empty() ? 0 : static_cast<int>(samples[i].teacher.size()) - 1;
    frames.push_back(f);
  }
  return EvalReport::aggregate(std::move(frames));
}

void save_teacher(const fs::path& path, Teacher& model, const json& meta) {
  ArrayContainer c;
  put_module(c, "", *model);
  c.meta = meta;
  c.meta["kind"] = "teacher";
  c.meta["arch"] = model->cfg.to_json();
  c.meta["module_hash"] = module_hash(*model);
  write_container(path, c);
}

Teacher load_teacher(const fs::path& path, json* meta) {
  if (!fs::exists(path)) throw PipelineOrderError("teacher checkpoint " + path.string() + " does not exist");
  const ArrayContainer c = read_container(path);
  if (c.meta.value("kind", "") != "teacher") throw IoError(path.string() + " is not a teacher checkpoint");
  Teacher m(MmrConfig::from_json(c.meta.at("arch")));
  get_module(c, "", *m);
  m->eval();
  if (meta != nullptr) *meta = c.meta;
  return m;
}

void save_mmr(const fs::path& path, MmrModel& model, const json& meta) {
  ArrayContainer c;
  put_module(c, "", *model);
  c.meta = meta;
  c.meta["kind"] = "mmr";
  c.meta["arch"] = model->cfg.to_json();
  c.meta["module_hash"] = module_hash(*model);
  write_container(path, c);
}

MmrModel load_mmr(const fs::path& path, json* meta) {
  if (!fs::exists(path)) throw PipelineOrderError("stage-2 checkpoint " + path.string() + " does not exist");
  const ArrayContainer c = read_container(path);
  if (c.meta.value("kind", "") != "mmr") throw IoError(path.string() + " is not a stage-2 checkpoint");
  MmrModel m(MmrConfig::from_json(c.meta.at("arch")));
  get_module(c, "", *m);
  m->eval();
  if (meta != nullptr) *meta = c.meta;
  return m;
}

}  // namespace radarmesh
