// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "radarmesh/checkpoint.hpp"
#include "radarmesh/dataset.hpp"
#include "radarmesh/experiments.hpp"
#include "radarmesh/nn.hpp"
#include "radarmesh/train_config.hpp"
#include "radarmesh/train_hre.hpp"
#include "radarmesh/train_mmr.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace radarmesh;

namespace {

json read_json_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  return json::parse(in);
}

void write_text(const fs::path& path, const std::string& s) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << s;
  if (!out) throw IoError("cannot write " + path.string());
}

void write_json_file(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

struct Common {
  std::string config;
  int epochs = -1;
  long long seed = -1;
  int batch = -1;
  double fraction = -1;
  double lr = -1;
  bool verbose = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON training config");
  app->add_option("--epochs", c.epochs, "override epochs");
  app->add_option("--seed", c.seed, "override seed");
  app->add_option("--batch", c.batch, "override batch size");
  app->add_option("--fraction", c.fraction, "training-set fraction in (0, 1]");
  app->add_option("--lr", c.lr, "override initial learning rate");
  app->add_flag("-v,--verbose", c.verbose, "per-epoch progress on stderr");
}

TrainConfig make_config(Stage stage, const Common& c) {
  json j = read_json_file(c.config);
  j["stage"] = stage_name(stage);
  if (c.epochs >= 0) j["epochs"] = c.epochs;
  if (c.seed >= 0) j["seed"] = c.seed;
  if (c.batch > 0) j["batch_size"] = c.batch;
  if (c.fraction > 0) j["fraction"] = c.fraction;
  if (c.lr > 0) j["lr_init"] = c.lr;
  TrainConfig cfg = TrainConfig::from_json(j);
  cfg.verbose = c.verbose;
  return cfg;
}

Ablation parse_ablation(const std::string& s) {
  Ablation a;
  if (s == "none") return a;
  if (s == "motion") {
    a.motion_off = true;
  } else if (s == "distill") {
    a.distill_off = true;
  } else if (s == "both") {
    a.motion_off = a.distill_off = true;
  } else if (s == "hre") {
    a.hre_off = true;
  } else {
    throw ConfigError("unknown ablation '" + s + "' (none | motion | distill | both | hre)");
  }
  return a;
}

Ablation ablation_from_meta(const json& meta) {
  const json& j = meta.at("config").at("ablation");
  Ablation a;
  a.motion_off = j.at("motion_off").get<bool>();
  a.distill_off = j.at("distill_off").get<bool>();
  a.hre_off = j.at("hre_off").get<bool>();
  return a;
}

std::vector<std::uint64_t> to_seeds(const std::vector<long long>& v) {
  std::vector<std::uint64_t> out;
  for (auto s : v) out.push_back(static_cast<std::uint64_t>(s));
  return out;
}

std::string table_csv(const json& table) {
  std::ostringstream s;
  const bool ablation = table.at("kind") == "ablation";
  s << (ablation ? "cell,motion_off,distill_off,hre_off" : "fraction,train_sequences") << ",mve_mean,mve_std,mje_mean\n";
  for (const auto& r : table.at("rows")) {
    if (ablation) {
      const auto& a = r.at("ablation");
      s << '"' << r.at("cell").get<std::string>() << "\"," << int(a.at("motion_off").get<bool>()) << ','
        << int(a.at("distill_off").get<bool>()) << ',' << int(a.at("hre_off").get<bool>());
    } else {
      s << r.at("fraction").get<double>() << ',' << r.at("train_sequences").get<int>();
    }
    s << ',' << r.at("mve_mean").get<double>() << ',' << r.at("mve_std").get<double>() << ','
      << r.at("mje_mean").get<double>() << '\n';
  }
  return s.str();
}

template <class Result>
json train_meta(const TrainConfig& cfg, const Split& train, const Result& res, const char* selection, bool reference) {
  return {{"config", cfg.to_json()},     {"config_hash", cfg.hash()},   {"dataset_hash", train.info.content_hash},
          {"best_epoch", res.best_epoch}, {"selection", selection},     {"reference_mode", reference}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"radarmesh: synthetic radar human mesh recovery"};
  app.require_subcommand(1);
  const bool reference = apply_reference_mode();

  std::string data, out, profile = "tiny", hre_ckpt, teacher_ckpt, mmr_ckpt, log_path, split = "test", csv,
                         ablate = "none", input;
  long long seed = 0;
  int n_train = -1, n_val = -1, n_test = -1;
  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset (train/val/test)");
  sim->add_option("--profile", profile, "default | tiny | bench");
  sim->add_option("--out", out, "output root")->required();
  sim->add_option("--seed", seed, "dataset seed");
  sim->add_option("--train", n_train, "override train count");
  sim->add_option("--val", n_val, "override val count");
  sim->add_option("--test", n_test, "override test count");

  Common hre_c;
  auto* thre = app.add_subcommand("train-hre", "train stage 1 (localizer + segmenter)");
  thre->add_option("--data", data, "dataset root with train/ and val/")->required();
  thre->add_option("--out", out, "checkpoint path")->required();
  thre->add_option("--log", log_path, "training log JSON");
  add_common(thre, hre_c);

  Common teacher_c;
  auto* tteach = app.add_subcommand("train-teacher", "train the dense-point teacher");
  tteach->add_option("--data", data, "dataset root")->required();
  tteach->add_option("--out", out, "checkpoint path")->required();
  tteach->add_option("--log", log_path, "training log JSON");
  add_common(tteach, teacher_c);

  Common mmr_c;
  auto* tmmr = app.add_subcommand("train-mmr", "train stage 2 on stage-1 extractions");
  tmmr->add_option("--data", data, "dataset root")->required();
  tmmr->add_option("--hre-ckpt", hre_ckpt, "stage-1 checkpoint")->required();
  tmmr->add_option("--teacher-ckpt", teacher_ckpt, "teacher checkpoint (unused with --ablate distill|both)");
  tmmr->add_option("--out", out, "checkpoint path")->required();
  tmmr->add_option("--ablate", ablate, "none | motion | distill | both | hre");
  tmmr->add_option("--log", log_path, "training log JSON");
  add_common(tmmr, mmr_c);

  auto* ext = app.add_subcommand("extract", "run stage 1 on a split and store probabilities and points");
  ext->add_option("--data", data, "dataset root")->required();
  ext->add_option("--split", split, "train | val | test");
  ext->add_option("--hre-ckpt", hre_ckpt, "stage-1 checkpoint")->required();
  ext->add_option("--out", out, "output directory")->required();

  auto* ev = app.add_subcommand("eval", "evaluate stage 2 on a split");
  ev->add_option("--data", data, "dataset root")->required();
  ev->add_option("--split", split, "train | val | test");
  ev->add_option("--hre-ckpt", hre_ckpt, "stage-1 checkpoint")->required();
  ev->add_option("--mmr-ckpt", mmr_ckpt, "stage-2 checkpoint")->required();
  ev->add_option("--out", out, "metrics JSON")->required();
  ev->add_option("--csv", csv, "per-frame CSV");

  Common abl_c;
  std::vector<long long> seeds{0, 1, 2};
  bool with_hre_off = false;
  auto* abl = app.add_subcommand("ablate", "stage-2 ablation grid over seeds");
  abl->add_option("--data", data, "dataset root")->required();
  abl->add_option("--hre-ckpt", hre_ckpt, "stage-1 checkpoint")->required();
  abl->add_option("--teacher-ckpt", teacher_ckpt, "teacher checkpoint")->required();
  abl->add_option("--out", out, "output directory")->required();
  abl->add_option("--seeds", seeds, "training seeds");
  abl->add_flag("--with-hre-off", with_hre_off, "add the CFAR-input row");
  add_common(abl, abl_c);

  Common de_c;
  std::vector<double> fractions{0.25, 0.5, 1.0};
  auto* de = app.add_subcommand("data-efficiency", "stage-2 test MVE vs training-set fraction");
  de->add_option("--data", data, "dataset root")->required();
  de->add_option("--hre-ckpt", hre_ckpt, "stage-1 checkpoint")->required();
  de->add_option("--teacher-ckpt", teacher_ckpt, "teacher checkpoint")->required();
  de->add_option("--out", out, "output directory")->required();
  de->add_option("--seeds", seeds, "training seeds");
  de->add_option("--fractions", fractions, "fractions in (0, 1]");
  add_common(de, de_c);

  auto* plot = app.add_subcommand("plot", "SVG plot of an ablation or data-efficiency table");
  plot->add_option("--input", input, "ablation.json or data_efficiency.json")->required();
  plot->add_option("--out", out, "SVG path")->required();

  std::string params_profile = "default";
  auto* par = app.add_subcommand("params", "parameter and MAC counts");
  par->add_option("--profile", params_profile, "default | tiny");
  par->add_option("--hre-ckpt", hre_ckpt, "count trained checkpoints instead (with --mmr-ckpt)");
  par->add_option("--mmr-ckpt", mmr_ckpt, "stage-2 checkpoint");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*sim) {
      DatasetProfile p = DatasetProfile::by_name(profile);
      if (n_train >= 0) p.n_train = n_train;
      if (n_val >= 0) p.n_val = n_val;
      if (n_test >= 0) p.n_test = n_test;
      generate_dataset(out, p, static_cast<std::uint64_t>(seed));
      std::cout << "wrote " << p.n_train << "/" << p.n_val << "/" << p.n_test << " sequences to " << out << "\n";
    } else if (*thre) {
      const TrainConfig cfg = make_config(Stage::hre, hre_c);
      const Split train = load_split(fs::path(data) / "train");
      const Split val = load_split(fs::path(data) / "val");
      auto res = train_hre(cfg, hre_config_for(train.info.scene), train, &val, fs::path(out).parent_path());
      json meta = train_meta(cfg, train, res, "val dice", reference);
      meta["best_val_dice"] = res.best_val_dice;
      save_hre(out, res.model, meta);
      meta["log"] = res.log;
      if (!log_path.empty()) write_json_file(log_path, meta);
      for (const auto& e : res.log) std::cout << e.dump() << "\n";
    } else if (*tteach) {
      const TrainConfig cfg = make_config(Stage::teacher, teacher_c);
      const Split train = load_split(fs::path(data) / "train");
      const Split val = load_split(fs::path(data) / "val");
      const MmrConfig arch = mmr_config_for(train.info.scene);
      const auto ts = teacher_samples(train, arch);
      const auto vs = teacher_samples(val, arch);
      auto res = train_teacher(cfg, arch, ts, &vs, fs::path(out).parent_path());
      json meta = train_meta(cfg, train, res, "val mve", reference);
      meta["best_val_mve"] = res.best_val_mve;
      save_teacher(out, res.model, meta);
      meta["log"] = res.log;
      if (!log_path.empty()) write_json_file(log_path, meta);
      for (const auto& e : res.log) std::cout << e.dump() << "\n";
    } else if (*tmmr) {
      TrainConfig cfg = make_config(Stage::mmr, mmr_c);
      cfg.ablation = parse_ablation(ablate);
      if (!cfg.ablation.distill_off && teacher_ckpt.empty())
        throw PipelineOrderError("stage-2 training with distillation needs --teacher-ckpt (train-teacher first)");
      HreModel hre = load_hre(hre_ckpt);
      const Split train = load_split(fs::path(data) / "train");
      const Split val = load_split(fs::path(data) / "val");
      const MmrConfig arch = mmr_config_for(train.info.scene);
      HreModel* src = cfg.ablation.hre_off ? nullptr : &hre;
      auto ts = prepare_samples(train, src, arch);
      auto vs = prepare_samples(val, src, arch);
      std::string teacher_hash = "none";
      if (!cfg.ablation.distill_off) {
        Teacher teacher = load_teacher(teacher_ckpt);
        attach_teacher_tokens(ts, teacher);
        teacher_hash = module_hash(*teacher);
      }
      auto res = train_mmr(cfg, arch, ts, &vs, fs::path(out).parent_path());
      json meta = train_meta(cfg, train, res, "val mve", reference);
      meta["best_val_mve"] = res.best_val_mve;
      meta["hre_hash"] = module_hash(*hre);
      meta["teacher_hash"] = teacher_hash;
      meta["provenance"] = ts.front().provenance;
      save_mmr(out, res.model, meta);
      meta["log"] = res.log;
      if (!log_path.empty()) write_json_file(log_path, meta);
      for (const auto& e : res.log) std::cout << e.dump() << "\n";
    } else if (*ext) {
      HreModel hre = load_hre(hre_ckpt);
      const Split s = load_split(fs::path(data) / split);
      const MmrConfig arch = mmr_config_for(s.info.scene);
      fs::create_directories(out);
      const HreEval e = evaluate_hre(hre, s);
      torch::NoGradGuard ng;
      for (std::size_t i = 0; i < s.sequences.size(); ++i) {
        const auto& seq = s.sequences[i];
        const auto refl = extract(seq.frames, seq.grid, hre);
        std::vector<torch::Tensor> probs;
        std::vector<double> pts;
        for (const auto& r : refl) {
          probs.push_back(volume_to_tensor(r.probs));
          const PointSet5 ps = select_topk_points(r, arch.k);
          pts.insert(pts.end(), ps.points.data(), ps.points.data() + ps.points.size());
        }
        ArrayContainer c;
        put_tensor(c, "probs", torch::stack(probs));
        put_tensor(c, "points",
                   torch::tensor(pts, torch::kFloat64).view({static_cast<long>(refl.size()), arch.k, 5}));
        c.meta = {{"sequence", s.info.files[i]},
                  {"roi_origin_voxel", refl.back().roi_origin_voxel},
                  {"grid", grid_to_json(seq.grid)},
                  {"point_columns", {"x", "y", "z", "intensity", "likelihood"}}};
        write_container(fs::path(out) / s.info.files[i], c);
      }
      json summary = {{"split", split},
                      {"sequences", s.sequences.size()},
                      {"stage1", e.to_json()},
                      {"hre_hash", module_hash(*hre)},
                      {"dataset_hash", s.info.content_hash}};
      write_json_file(fs::path(out) / "summary.json", summary);
      std::cout << summary.dump() << "\n";
    } else if (*ev) {
      HreModel hre = load_hre(hre_ckpt);
      json meta;
      MmrModel mmr = load_mmr(mmr_ckpt, &meta);
      const Ablation ab = ablation_from_meta(meta);
      const Split s = load_split(fs::path(data) / split);
      const auto samples = prepare_samples(s, ab.hre_off ? nullptr : &hre, mmr->cfg);
      const EvalReport r = evaluate_mmr(mmr, samples, !ab.motion_off);
      json j = r.to_json();
      j["split"] = split;
      j["ablation"] = ab.label();
      j["dataset_hash"] = s.info.content_hash;
      j["hre_hash"] = module_hash(*hre);
      j["mmr_hash"] = module_hash(*mmr);
      write_json_file(out, j);
      if (!csv.empty()) r.write_csv(csv);
      std::cout << j.dump() << "\n";
    } else if (*abl || *de) {
      const Common& c = *abl ? abl_c : de_c;
      const TrainConfig base = make_config(Stage::mmr, c);
      HreModel hre = load_hre(hre_ckpt);
      Teacher teacher = load_teacher(teacher_ckpt);
      const Stage2Data d = load_stage2_data(data, hre, &teacher, *abl && with_hre_off);
      json table = *abl ? run_ablation(d, base, to_seeds(seeds), with_hre_off)
                        : run_data_efficiency(d, base, fractions, to_seeds(seeds));
      table["reference_mode"] = reference;
      const std::string stem = *abl ? "ablation" : "data_efficiency";
      write_json_file(fs::path(out) / (stem + ".json"), table);
      write_text(fs::path(out) / (stem + ".svg"), *abl ? ablation_svg(table) : data_efficiency_svg(table));
      const std::string rows = table_csv(table);
      write_text(fs::path(out) / (stem + ".csv"), rows);
      write_json_file(fs::path(out) / "manifest.json", {{"experiment", stem},
                                                        {"config_hash", base.hash()},
                                                        {"config", base.to_json()},
                                                        {"seeds", seeds},
                                                        {"data", d.provenance},
                                                        {"reference_mode", reference}});
      std::cout << rows;
    } else if (*plot) {
      const json t = read_json_file(input);
      const std::string kind = t.value("kind", "");
      if (kind == "ablation") {
        write_text(out, ablation_svg(t));
      } else if (kind == "data_efficiency") {
        write_text(out, data_efficiency_svg(t));
      } else {
        throw ConfigError(input + " is not an ablation or data-efficiency table");
      }
    } else if (*par) {
      ParamCount p;
      if (!hre_ckpt.empty() && !mmr_ckpt.empty()) {
        HreModel h = load_hre(hre_ckpt);
        MmrModel m = load_mmr(mmr_ckpt);
        p = count_params(h, m);
      } else {
        const DatasetProfile prof = DatasetProfile::by_name(params_profile);
        p = count_params(hre_config_for(prof.scene), mmr_config_for(prof.scene));
      }
      std::cout << p.to_json().dump(2) << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
