// SPDX-License-Identifier: Apache-2.0
#include "radarmesh/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "radarmesh/errors.hpp"
#include "radarmesh/geometry.hpp"

namespace radarmesh {

namespace {

double mean_row_distance(const Points& a, const Points& b) {
  double s = 0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) s += (a.row(i) - b.row(i)).norm();
  return s / static_cast<double>(a.rows());
}

// atan2(sin, cos) of the relative rotation; same angle as the clamped
// arccos((tr - 1) / 2) but without its loss of precision near zero.
double geodesic_deg(const Mat3& a, const Mat3& b) {
  const Mat3 r = a * b.transpose();
  const double c = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
  const double s = 0.5 * Vec3(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1)).norm();
  return std::atan2(s, c) * 180.0 / std::numbers::pi;
}

}  // namespace

double mve(const Points& pred, const Points& gt) {
  require(pred.rows() == gt.rows() && pred.rows() > 0, "vertex counts differ");
  return 1000.0 * mean_row_distance(pred, gt);
}

double mje(const Points& pred, const Points& gt) {
  require(pred.rows() == kNumJoints && gt.rows() == kNumJoints, "joint sets must have 22 rows");
  return 1000.0 * mean_row_distance(pred, gt);
}

double mre(const std::vector<Vec3>& pred_aa, const std::vector<Vec3>& gt_aa) {
  require(pred_aa.size() == gt_aa.size() && !pred_aa.empty(), "rotation counts differ");
  double s = 0;
  for (std::size_t i = 0; i < pred_aa.size(); ++i) {
    s += geodesic_deg(axis_angle_to_matrix(pred_aa[i]), axis_angle_to_matrix(gt_aa[i]));
  }
  return s / static_cast<double>(pred_aa.size());
}

double mre(const BodyParams& pred, const BodyParams& gt, bool include_root) {
  double s = 0;
  int n = 0;
  for (int j = include_root ? 0 : 1; j < kNumJoints; ++j) {
    Mat3 rp = axis_angle_to_matrix(pred.theta.row(j).transpose());
    Mat3 rg = axis_angle_to_matrix(gt.theta.row(j).transpose());
    if (j == 0) {
      rp = axis_angle_to_matrix(pred.alpha) * rp;
      rg = axis_angle_to_matrix(gt.alpha) * rg;
    }
    s += geodesic_deg(rp, rg);
    ++n;
  }
  return s / n;
}

double te(const Vec3& pred, const Vec3& gt) { return 1000.0 * (pred - gt).norm(); }

FrameMetrics evaluate_frame(const BodyParams& pred, const BodyParams& gt, bool include_root) {
  const Mesh mp = forward(select_template(pred.g), pred);
  const Mesh mg = forward(select_template(gt.g), gt);
  FrameMetrics f;
  f.mve = mve(mp.vertices, mg.vertices);
  f.mje = mje(Points(mp.joints), Points(mg.joints));
  f.mre = mre(pred, gt, include_root);
  f.te = te(pred.tau, gt.tau);
  return f;
}

EvalReport EvalReport::aggregate(std::vector<FrameMetrics> frames) {
  EvalReport r;
  r.n_frames = static_cast<int>(frames.size());
  for (const auto& f : frames) {
    r.mve += f.mve;
    r.mje += f.mje;
    r.mre += f.mre;
    r.te += f.te;
  }
  if (r.n_frames > 0) {
    r.mve /= r.n_frames;
    r.mje /= r.n_frames;
    r.mre /= r.n_frames;
    r.te /= r.n_frames;
  }
  r.per_frame = std::move(frames);
  return r;
}

nlohmann::json EvalReport::to_json(bool with_frames) const {
  nlohmann::json j = {{"mve_mm", mve}, {"mje_mm", mje}, {"mre_deg", mre}, {"te_mm", te}, {"n_frames", n_frames}};
  if (with_frames) {
    j["per_frame"] = nlohmann::json::array();
    for (const auto& f : per_frame) {
      j["per_frame"].push_back(
          {{"sequence", f.sequence}, {"frame", f.frame}, {"mve_mm", f.mve}, {"mje_mm", f.mje}, {"mre_deg", f.mre}, {"te_mm", f.te}});
    }
  }
  return j;
}

void EvalReport::write_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out.precision(17);
  out << "sequence,frame,mve_mm,mje_mm,mre_deg,te_mm\n";
  for (const auto& f : per_frame) {
    out << f.sequence << "," << f.frame << "," << f.mve << "," << f.mje << "," << f.mre << "," << f.te << "\n";
  }
  if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace radarmesh
