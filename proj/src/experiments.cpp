// SPDX-License-Identifier: Apache-2.0
#include "radarmesh/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "radarmesh/checkpoint.hpp"
#include "radarmesh/errors.hpp"

namespace radarmesh {

namespace fs = std::filesystem;
using nlohmann::json;

std::int64_t ParamCount::inference_total() const {
  return localizers + segmenter + shape_encoder + motion_encoder + fusion + head;
}

json ParamCount::to_json() const {
  return {{"localizers", localizers},
          {"segmenter", segmenter},
          {"shape_encoder", shape_encoder},
          {"motion_encoder", motion_encoder},
          {"motion_decoder_training_only", motion_decoder},
          {"fusion", fusion},
          {"head", head},
          {"teacher_training_only", teacher},
          {"inference_total", inference_total()},
          {"macs_per_window", macs},
          {"gmacs_per_window", macs / 1e9}};
}

ParamCount count_params(HreModel& hre, MmrModel& mmr, Teacher* teacher) {
  ParamCount p;
  p.localizers = count_parameters(*hre->loc_xy) + count_parameters(*hre->loc_yz) + count_parameters(*hre->loc_xz);
  p.segmenter = count_parameters(*hre->seg);
  p.shape_encoder = count_parameters(*mmr->shape);
  const auto& unet = mmr->motion->unet;
  p.motion_encoder = unet->encoder_parameters() + count_parameters(*mmr->motion->token);
  p.motion_decoder = count_parameters(*mmr->motion) - p.motion_encoder;
  // the learned motion-off token is part of the fusion input
  p.fusion = count_parameters(*mmr->fusion) + mmr->motion_const.numel();
  p.head = count_parameters(*mmr->head);
  if (teacher != nullptr) p.teacher = count_parameters(**teacher);
  const auto& hc = hre->cfg;
  const double seg_macs = hre->seg->encoder_macs(hc.roi_dims) + hre->seg->decoder_macs(hc.roi_dims);
  const double loc_macs = hre->macs() - seg_macs;
  p.macs = loc_macs + mmr->cfg.window * seg_macs + mmr->macs();
  return p;
}

ParamCount count_params(const HreConfig& hre, const MmrConfig& mmr) {
  HreModel h(hre);
  MmrModel m(mmr);
  Teacher t(mmr);
  return count_params(h, m, &t);
}

Stage2Data load_stage2_data(const fs::path& root, HreModel& hre, Teacher* teacher, bool with_cfar) {
  Stage2Data d;
  const Split train = load_split(root / "train");
  const Split val = load_split(root / "val");
  const Split test = load_split(root / "test");
  d.arch = mmr_config_for(train.info.scene);
  d.train = prepare_samples(train, &hre, d.arch);
  d.val = prepare_samples(val, &hre, d.arch);
  d.test = prepare_samples(test, &hre, d.arch);
  if (with_cfar) {
    d.train_cfar = prepare_samples(train, nullptr, d.arch);
    d.val_cfar = prepare_samples(val, nullptr, d.arch);
    d.test_cfar = prepare_samples(test, nullptr, d.arch);
  }
  if (teacher != nullptr) {
    for (auto* v : {&d.train, &d.val, &d.test, &d.train_cfar, &d.val_cfar, &d.test_cfar}) attach_teacher_tokens(*v, *teacher);
  }
  d.provenance = {{"dataset_root", root.string()},
                  {"train_hash", train.info.content_hash},
                  {"val_hash", val.info.content_hash},
                  {"test_hash", test.info.content_hash},
                  {"profile", train.info.profile},
                  {"hre_hash", module_hash(*hre)},
                  {"teacher_hash", teacher != nullptr ? module_hash(**teacher) : std::string("none")},
                  {"arch", d.arch.to_json()}};
  return d;
}

RunResult run_stage2(const Stage2Data& data, const TrainConfig& cfg) {
  const bool cfar = cfg.ablation.hre_off;
  const auto& train = cfar ? data.train_cfar : data.train;
  const auto& val = cfar ? data.val_cfar : data.val;
  const auto& test = cfar ? data.test_cfar : data.test;
  if (train.empty()) throw ConfigError(cfar ? "CFAR samples were not prepared" : "no training samples");
  auto res = train_mmr(cfg, data.arch, train, &val);
  RunResult r;
  r.ablation = cfg.ablation;
  r.seed = cfg.seed;
  r.fraction = cfg.fraction;
  r.train_sequences = static_cast<int>(subset_indices(static_cast<int>(train.size()), cfg.fraction, cfg.seed).size());
  r.test = evaluate_mmr(res.model, test, !cfg.ablation.motion_off);
  r.best_epoch = res.best_epoch;
  r.provenance = train.front().provenance;
  return r;
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0};
}

json ablation_json(const Ablation& a) {
  return {{"motion_off", a.motion_off}, {"distill_off", a.distill_off}, {"hre_off", a.hre_off}};
}

json summarize(const std::vector<RunResult>& runs) {
  std::vector<double> mve, mje, mre, te;
  json per_seed = json::array();
  for (const auto& r : runs) {
    mve.push_back(r.test.mve);
    mje.push_back(r.test.mje);
    mre.push_back(r.test.mre);
    te.push_back(r.test.te);
    per_seed.push_back({{"seed", r.seed}, {"test", r.test.to_json()}, {"best_epoch", r.best_epoch},
                        {"train_sequences", r.train_sequences}, {"provenance", r.provenance}});
  }
  const auto [m, s] = mean_std(mve);
  return {{"mve", mve}, {"mje", mje}, {"mre", mre}, {"te", te}, {"mve_mean", m}, {"mve_std", s},
          {"mje_mean", mean_std(mje).first}, {"runs", per_seed}};
}

}  // namespace

json run_ablation(const Stage2Data& data, const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                  bool with_hre_off) {
  std::vector<std::pair<std::string, Ablation>> cells = {{"both off", {true, true, false}},
                                                         {"motion only", {false, true, false}},
                                                         {"distill only", {true, false, false}},
                                                         {"both on", {false, false, false}}};
  if (with_hre_off) cells.push_back({"both on, CFAR input", {false, false, true}});
  json rows = json::array();
  for (const auto& [name, ab] : cells) {
    std::vector<RunResult> runs;
    for (auto seed : seeds) {
      TrainConfig cfg = base;
      cfg.ablation = ab;
      cfg.seed = seed;
      runs.push_back(run_stage2(data, cfg));
      if (base.verbose) std::cerr << "ablation " << name << " seed " << seed << " mve " << runs.back().test.mve << std::endl;
    }
    json row = summarize(runs);
    row["cell"] = name;
    row["label"] = ab.label();
    row["ablation"] = ablation_json(ab);
    row["provenance"] = runs.front().provenance;
    rows.push_back(row);
  }
  return {{"kind", "ablation"},
          {"metric", "mve_mm"},
          {"seeds", seeds},
          {"base_config", base.to_json()},
          {"config_hash", base.hash()},
          {"data", data.provenance},
          {"rows", rows}};
}

json run_data_efficiency(const Stage2Data& data, const TrainConfig& base, const std::vector<double>& fractions,
                         const std::vector<std::uint64_t>& seeds) {
  json rows = json::array();
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("fractions must lie in (0, 1]");
    std::vector<RunResult> runs;
    for (auto seed : seeds) {
      TrainConfig cfg = base;
      cfg.fraction = f;
      cfg.seed = seed;
      runs.push_back(run_stage2(data, cfg));
      if (base.verbose) std::cerr << "fraction " << f << " seed " << seed << " mve " << runs.back().test.mve << std::endl;
    }
    json row = summarize(runs);
    row["fraction"] = f;
    row["train_sequences"] = runs.front().train_sequences;
    rows.push_back(row);
  }
  return {{"kind", "data_efficiency"},
          {"metric", "mve_mm"},
          {"fractions", fractions},
          {"seeds", seeds},
          {"base_config", base.to_json()},
          {"config_hash", base.hash()},
          {"data", data.provenance},
          {"rows", rows}};
}

namespace {

std::string fmt(double x, int prec = 1) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(prec) << x;
  return s.str();
}

struct Svg {
  std::ostringstream out;
  Svg(int w, int h) {
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  }
  void line(double x1, double y1, double x2, double y2, const std::string& stroke = "black") {
    out << "<line x1=\"" << fmt(x1) << "\" y1=\"" << fmt(y1) << "\" x2=\"" << fmt(x2) << "\" y2=\"" << fmt(y2)
        << "\" stroke=\"" << stroke << "\"/>\n";
  }
  void text(double x, double y, const std::string& s, const std::string& anchor = "middle") {
    out << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" text-anchor=\"" << anchor << "\">" << s << "</text>\n";
  }
  std::string done() {
    out << "</svg>\n";
    return out.str();
  }
};

double axis_max(const json& rows) {
  double hi = 1.0;
  for (const auto& r : rows) hi = std::max(hi, r.at("mve_mean").get<double>() + r.at("mve_std").get<double>());
  return hi * 1.15;
}

}  // namespace

std::string ablation_svg(const json& table) {
  const auto& rows = table.at("rows");
  const int n = static_cast<int>(rows.size());
  const double left = 60, top = 30, h = 260, bw = 90, gap = 30;
  const double w = left + n * (bw + gap) + gap;
  Svg svg(static_cast<int>(w), static_cast<int>(top + h + 70));
  const double hi = axis_max(rows);
  auto y_of = [&](double v) { return top + h - v / hi * h; };
  svg.text(w / 2, 18, "Stage-2 ablation: test MVE (mm), mean and std over seeds");
  svg.line(left, top, left, top + h);
  svg.line(left, top + h, w - 10, top + h);
  for (int k = 0; k <= 4; ++k) {
    const double v = hi * k / 4;
    svg.line(left - 4, y_of(v), left, y_of(v));
    svg.text(left - 8, y_of(v) + 4, fmt(v, 0), "end");
  }
  for (int i = 0; i < n; ++i) {
    const auto& r = rows[i];
    const double m = r.at("mve_mean").get<double>();
    const double s = r.at("mve_std").get<double>();
    const double x = left + gap + i * (bw + gap);
    svg.out << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y_of(m)) << "\" width=\"" << fmt(bw) << "\" height=\""
            << fmt(top + h - y_of(m)) << "\" fill=\"#4878a8\"/>\n";
    svg.line(x + bw / 2, y_of(m - s), x + bw / 2, y_of(m + s));
    svg.line(x + bw / 2 - 8, y_of(m + s), x + bw / 2 + 8, y_of(m + s));
    svg.line(x + bw / 2 - 8, y_of(m - s), x + bw / 2 + 8, y_of(m - s));
    svg.text(x + bw / 2, y_of(m + s) - 6, fmt(m));
    svg.text(x + bw / 2, top + h + 18, r.at("cell").get<std::string>());
  }
  return svg.done();
}

std::string data_efficiency_svg(const json& table) {
  const auto& rows = table.at("rows");
  const double left = 60, top = 30, w = 420, h = 260;
  Svg svg(static_cast<int>(left + w + 30), static_cast<int>(top + h + 60));
  const double hi = axis_max(rows);
  auto x_of = [&](double f) { return left + f * w; };
  auto y_of = [&](double v) { return top + h - v / hi * h; };
  svg.text(left + w / 2, 18, "Test MVE (mm) vs training-set fraction");
  svg.line(left, top, left, top + h);
  svg.line(left, top + h, left + w, top + h);
  for (int k = 0; k <= 4; ++k) {
    const double v = hi * k / 4;
    svg.text(left - 8, y_of(v) + 4, fmt(v, 0), "end");
    svg.line(left - 4, y_of(v), left, y_of(v));
  }
  std::string pts;
  for (const auto& r : rows) {
    const double f = r.at("fraction").get<double>();
    const double m = r.at("mve_mean").get<double>();
    const double s = r.at("mve_std").get<double>();
    pts += fmt(x_of(f)) + "," + fmt(y_of(m)) + " ";
    svg.line(x_of(f), y_of(m - s), x_of(f), y_of(m + s));
    svg.out << "<circle cx=\"" << fmt(x_of(f)) << "\" cy=\"" << fmt(y_of(m)) << "\" r=\"4\" fill=\"#c44e52\"/>\n";
    svg.text(x_of(f), top + h + 18, fmt(100 * f, 0) + "%");
    svg.text(x_of(f) + 6, y_of(m) - 8, fmt(m), "start");
  }
  svg.out << "<polyline points=\"" << pts << "\" fill=\"none\" stroke=\"#c44e52\"/>\n";
  return svg.done();
}

}  // namespace radarmesh
