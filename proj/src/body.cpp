// SPDX-License-Identifier: Apache-2.0
#include "radarmesh/body.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "radarmesh/errors.hpp"
#include "radarmesh/geometry.hpp"

namespace radarmesh {

const std::array<std::string_view, kNumMeasures> kMeasureNames = {
    "hip_half_width", "hip_drop", "thigh", "shin", "ankle_height", "foot_forward", "toe_length",
    "spine_lower", "spine_mid", "spine_upper", "neck_height", "head_height", "head_top",
    "collar_height", "collar_lateral", "shoulder_lateral", "upper_arm", "forearm", "hand",
    "pelvis_bottom",
    "pelvis_rx", "pelvis_ry", "waist_rx", "waist_ry", "chest_rx", "chest_ry", "neck_r",
    "head_rx", "head_ry", "thigh_r", "shin_r", "foot_r", "toe_r", "collar_r", "upper_arm_r",
    "forearm_r", "hand_r"};

std::array<double, kNumMeasures> TemplateConfig::default_measures() {
  std::array<double, kNumMeasures> m{};
  m[kHipHalfWidth] = 0.09;
  m[kHipDrop] = 0.08;
  m[kThigh] = 0.40;
  m[kShin] = 0.40;
  m[kAnkleHeight] = 0.06;
  m[kFootForward] = 0.12;
  m[kToeLength] = 0.06;
  m[kSpineLower] = 0.10;
  m[kSpineMid] = 0.13;
  m[kSpineUpper] = 0.06;
  m[kNeckHeight] = 0.21;
  m[kHeadHeight] = 0.10;
  m[kHeadTop] = 0.16;
  m[kCollarHeight] = 0.16;
  m[kCollarLateral] = 0.07;
  m[kShoulderLateral] = 0.12;
  m[kUpperArm] = 0.27;
  m[kForearm] = 0.25;
  m[kHand] = 0.17;
  m[kPelvisBottom] = 0.12;
  m[kPelvisRx] = 0.16;
  m[kPelvisRy] = 0.11;
  m[kWaistRx] = 0.14;
  m[kWaistRy] = 0.10;
  m[kChestRx] = 0.17;
  m[kChestRy] = 0.11;
  m[kNeckR] = 0.05;
  m[kHeadRx] = 0.085;
  m[kHeadRy] = 0.10;
  m[kThighR] = 0.075;
  m[kShinR] = 0.055;
  m[kFootR] = 0.045;
  m[kToeR] = 0.035;
  m[kCollarR] = 0.05;
  m[kUpperArmR] = 0.05;
  m[kForearmR] = 0.04;
  m[kHandR] = 0.035;
  return m;
}

const std::vector<int>& shape_group(int k) {
  static const std::array<std::vector<int>, kNumBetas> groups = [] {
    std::array<std::vector<int>, kNumBetas> g;
    for (int i = 0; i < kNumMeasures; ++i) g[0].push_back(i);
    g[1] = {kThigh, kShin};
    g[2] = {kUpperArm, kForearm, kHand};
    g[3] = {kSpineLower, kSpineMid, kSpineUpper, kNeckHeight, kCollarHeight};
    g[4] = {kPelvisRx, kWaistRx, kChestRx};
    g[5] = {kThighR, kShinR, kUpperArmR, kForearmR};
    g[6] = {kCollarLateral, kShoulderLateral};
    g[7] = {kHipHalfWidth};
    g[8] = {kHeadRx, kHeadRy, kHeadHeight, kHeadTop, kNeckR};
    g[9] = {kPelvisRy, kWaistRy, kChestRy};
    return g;
  }();
  if (k < 0 || k >= kNumBetas) throw ContractViolation("shape group index out of range");
  return groups[static_cast<std::size_t>(k)];
}

TemplateConfig female_scaled(const TemplateConfig& cfg) {
  TemplateConfig out = cfg;
  auto& m = out.measures;
  for (double& v : m) v *= 0.94;
  m[kHipHalfWidth] *= 1.05;
  m[kPelvisRx] *= 1.04;
  m[kCollarLateral] *= 0.90;
  m[kShoulderLateral] *= 0.90;
  m[kChestRx] *= 0.93;
  for (int i : {kThighR, kShinR, kUpperArmR, kForearmR, kHandR}) m[i] *= 0.92;
  return out;
}

bool BodyParams::valid() const {
  return alpha.allFinite() && beta.allFinite() && tau.allFinite() && theta.allFinite() &&
         std::isfinite(g) && g >= 0.0 && g <= 1.0;
}

std::vector<double> BodyParams::to_vector() const {
  std::vector<double> v;
  v.reserve(kNumContinuousParams + 1);
  for (int i = 0; i < 3; ++i) v.push_back(alpha[i]);
  for (int i = 0; i < kNumBetas; ++i) v.push_back(beta[i]);
  for (int i = 0; i < 3; ++i) v.push_back(tau[i]);
  for (int j = 0; j < kNumJoints; ++j) {
    for (int a = 0; a < 3; ++a) v.push_back(theta(j, a));
  }
  v.push_back(g);
  return v;
}

BodyParams BodyParams::from_vector(const std::vector<double>& v) {
  require(v.size() == kNumContinuousParams + 1, "BodyParams::from_vector expects 83 values");
  BodyParams p;
  std::size_t o = 0;
  for (int i = 0; i < 3; ++i) p.alpha[i] = v[o++];
  for (int i = 0; i < kNumBetas; ++i) p.beta[i] = v[o++];
  for (int i = 0; i < 3; ++i) p.tau[i] = v[o++];
  for (int j = 0; j < kNumJoints; ++j) {
    for (int a = 0; a < 3; ++a) p.theta(j, a) = v[o++];
  }
  p.g = v[o];
  return p;
}

namespace {

struct PartSpec {
  Vec3 start;
  Vec3 end;
  double rx;
  double ry;
  int start_blend;  // joint blended in near the start, or -1
  int end_blend;    // joint blended in near the end, or -1
};

JointMatrix joints_from_measures(const std::array<double, kNumMeasures>& m) {
  JointMatrix j = JointMatrix::Zero();
  auto set = [&](int idx, const Vec3& v) { j.row(idx) = v.transpose(); };
  auto get = [&](int idx) -> Vec3 { return j.row(idx).transpose(); };
  set(0, Vec3::Zero());
  set(1, Vec3(m[kHipHalfWidth], 0.0, -m[kHipDrop]));
  set(2, Vec3(-m[kHipHalfWidth], 0.0, -m[kHipDrop]));
  set(3, Vec3(0.0, 0.0, m[kSpineLower]));
  set(4, get(1) - Vec3(0.0, 0.0, m[kThigh]));
  set(5, get(2) - Vec3(0.0, 0.0, m[kThigh]));
  set(6, get(3) + Vec3(0.0, 0.0, m[kSpineMid]));
  set(7, get(4) - Vec3(0.0, 0.0, m[kShin]));
  set(8, get(5) - Vec3(0.0, 0.0, m[kShin]));
  set(9, get(6) + Vec3(0.0, 0.0, m[kSpineUpper]));
  set(10, get(7) + Vec3(0.0, -m[kFootForward], -m[kAnkleHeight]));
  set(11, get(8) + Vec3(0.0, -m[kFootForward], -m[kAnkleHeight]));
  set(12, get(9) + Vec3(0.0, 0.0, m[kNeckHeight]));
  set(13, get(9) + Vec3(m[kCollarLateral], 0.0, m[kCollarHeight]));
  set(14, get(9) + Vec3(-m[kCollarLateral], 0.0, m[kCollarHeight]));
  set(15, get(12) + Vec3(0.0, 0.0, m[kHeadHeight]));
  set(16, get(13) + Vec3(m[kShoulderLateral], 0.0, 0.0));
  set(17, get(14) + Vec3(-m[kShoulderLateral], 0.0, 0.0));
  set(18, get(16) + Vec3(m[kUpperArm], 0.0, 0.0));
  set(19, get(17) + Vec3(-m[kUpperArm], 0.0, 0.0));
  set(20, get(18) + Vec3(m[kForearm], 0.0, 0.0));
  set(21, get(19) + Vec3(-m[kForearm], 0.0, 0.0));
  return j;
}

// One part per joint; part j is rigidly driven by joint j.
std::array<PartSpec, kNumJoints> parts_from_measures(const std::array<double, kNumMeasures>& m,
                                                     const JointMatrix& j) {
  auto J = [&](int idx) -> Vec3 { return j.row(idx).transpose(); };
  std::array<PartSpec, kNumJoints> p{};
  p[0] = {Vec3(0.0, 0.0, -m[kPelvisBottom]), J(3), m[kPelvisRx], m[kPelvisRy], -1, 3};
  p[1] = {J(1), J(4), m[kThighR], m[kThighR], 0, 4};
  p[2] = {J(2), J(5), m[kThighR], m[kThighR], 0, 5};
  p[3] = {J(3), J(6), m[kWaistRx], m[kWaistRy], 0, 6};
  p[4] = {J(4), J(7), m[kShinR], m[kShinR], 1, 7};
  p[5] = {J(5), J(8), m[kShinR], m[kShinR], 2, 8};
  p[6] = {J(6), J(9), m[kWaistRx], m[kWaistRy], 3, 9};
  p[7] = {J(7), J(10), m[kFootR], m[kFootR], 4, 10};
  p[8] = {J(8), J(11), m[kFootR], m[kFootR], 5, 11};
  p[9] = {J(9), J(12), m[kChestRx], m[kChestRy], 6, -1};
  p[10] = {J(10), J(10) + Vec3(0.0, -m[kToeLength], 0.0), m[kToeR], m[kToeR], 7, -1};
  p[11] = {J(11), J(11) + Vec3(0.0, -m[kToeLength], 0.0), m[kToeR], m[kToeR], 8, -1};
  p[12] = {J(12), J(15), m[kNeckR], m[kNeckR], 9, 15};
  p[13] = {J(13), J(16), m[kCollarR], m[kCollarR], 9, 16};
  p[14] = {J(14), J(17), m[kCollarR], m[kCollarR], 9, 17};
  p[15] = {J(15), J(15) + Vec3(0.0, 0.0, m[kHeadTop]), m[kHeadRx], m[kHeadRy], 12, -1};
  p[16] = {J(16), J(18), m[kUpperArmR], m[kUpperArmR], 13, 18};
  p[17] = {J(17), J(19), m[kUpperArmR], m[kUpperArmR], 14, 19};
  p[18] = {J(18), J(20), m[kForearmR], m[kForearmR], 16, 20};
  p[19] = {J(19), J(21), m[kForearmR], m[kForearmR], 17, 21};
  p[20] = {J(20), J(20) + Vec3(m[kHand], 0.0, 0.0), m[kHandR], m[kHandR], 18, -1};
  p[21] = {J(21), J(21) + Vec3(-m[kHand], 0.0, 0.0), m[kHandR], m[kHandR], 19, -1};
  return p;
}

// Ring layout of one part: vertex count per ring (excluding the two apexes).
struct PartLayout {
  std::vector<int> ring_sizes;
};

// Vertex budget per part from the default measurements, so that every
// template built with the same num_vertices shares topology.
std::array<PartLayout, kNumJoints> plan_layout(int num_vertices) {
  const auto m = TemplateConfig::default_measures();
  const JointMatrix j = joints_from_measures(m);
  const auto parts = parts_from_measures(m, j);
  constexpr int kMinPerPart = 8;  // 2 apexes + 2 rings of 3
  std::array<double, kNumJoints> area{};
  double total = 0.0;
  for (int i = 0; i < kNumJoints; ++i) {
    const double len = (parts[i].end - parts[i].start).norm();
    const double r = 0.5 * (parts[i].rx + parts[i].ry);
    area[i] = 2.0 * std::numbers::pi * r * len + 4.0 * std::numbers::pi * r * r;
    total += area[i];
  }
  const int spare = num_vertices - kMinPerPart * kNumJoints;
  std::array<int, kNumJoints> budget{};
  std::array<double, kNumJoints> frac{};
  int used = 0;
  for (int i = 0; i < kNumJoints; ++i) {
    const double share = spare * area[i] / total;
    budget[i] = kMinPerPart + static_cast<int>(std::floor(share));
    frac[i] = share - std::floor(share);
    used += budget[i];
  }
  std::array<int, kNumJoints> order{};
  for (int i = 0; i < kNumJoints; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return frac[a] > frac[b]; });
  for (int k = 0; used < num_vertices; ++k, ++used) budget[order[k % kNumJoints]] += 1;

  std::array<PartLayout, kNumJoints> layout;
  for (int i = 0; i < kNumJoints; ++i) {
    const int ring_pts = budget[i] - 2;
    const double len = (parts[i].end - parts[i].start).norm();
    const double circ = std::numbers::pi * (parts[i].rx + parts[i].ry);
    int rings = static_cast<int>(std::lround(std::sqrt(ring_pts * len / circ)));
    rings = std::clamp(rings, 2, ring_pts / 3);
    layout[i].ring_sizes.assign(rings, ring_pts / rings);
    for (int r = 0; r < ring_pts % rings; ++r) layout[i].ring_sizes[r] += 1;
  }
  return layout;
}

struct RawMesh {
  Points vertices;
  std::vector<std::array<int, 3>> faces;
  Eigen::MatrixXd weights;
};

RawMesh build_geometry(const std::array<double, kNumMeasures>& m,
                       const std::array<PartLayout, kNumJoints>& layout, int num_vertices) {
  const JointMatrix j = joints_from_measures(m);
  const auto parts = parts_from_measures(m, j);
  RawMesh out;
  out.vertices.resize(num_vertices, 3);
  out.weights = Eigen::MatrixXd::Zero(num_vertices, kNumJoints);
  int next = 0;

  for (int pi = 0; pi < kNumJoints; ++pi) {
    const PartSpec& part = parts[pi];
    const Vec3 axis = part.end - part.start;
    const Vec3 dir = axis.normalized();
    const Vec3 helper = std::abs(dir.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    const Vec3 ex = (helper - helper.dot(dir) * dir).normalized();
    const Vec3 ey = dir.cross(ex);
    const double rmean = 0.5 * (part.rx + part.ry);

    auto add_vertex = [&](const Vec3& pos, double t) {
      out.vertices.row(next) = pos.transpose();
      double w_start = 0.0;
      double w_end = 0.0;
      if (part.start_blend >= 0) w_start = std::max(0.0, 0.5 * (1.0 - t / 0.25));
      if (part.end_blend >= 0) w_end = std::max(0.0, 0.5 * (t - 0.75) / 0.25);
      if (w_start > 0.0) out.weights(next, part.start_blend) += w_start;
      if (w_end > 0.0) out.weights(next, part.end_blend) += w_end;
      out.weights(next, pi) += 1.0 - w_start - w_end;
      return next++;
    };

    const int apex_lo = add_vertex(part.start - 0.5 * rmean * dir, 0.0);
    const auto& rings = layout[pi].ring_sizes;
    const int nr = static_cast<int>(rings.size());
    std::vector<int> ring_start(nr);
    std::vector<double> ring_phase(nr);
    for (int r = 0; r < nr; ++r) {
      const double t = (r + 0.5) / nr;
      const int count = rings[r];
      ring_start[r] = next;
      ring_phase[r] = (r % 2) * std::numbers::pi / count;
      for (int k = 0; k < count; ++k) {
        const double phi = ring_phase[r] + 2.0 * std::numbers::pi * k / count;
        const Vec3 pos =
            part.start + t * axis + std::cos(phi) * part.rx * ex + std::sin(phi) * part.ry * ey;
        add_vertex(pos, t);
      }
    }
    const int apex_hi = add_vertex(part.end + 0.5 * rmean * dir, 1.0);

    auto ring_vertex = [&](int r, int k) { return ring_start[r] + (k % rings[r]); };
    for (int k = 0; k < rings[0]; ++k) {
      out.faces.push_back({apex_lo, ring_vertex(0, k + 1), ring_vertex(0, k)});
    }
    for (int r = 0; r + 1 < nr; ++r) {
      // Zipper between rings of possibly different sizes, merged by angle.
      const int na = rings[r];
      const int nb = rings[r + 1];
      int ia = 0;
      int ib = 0;
      while (ia < na || ib < nb) {
        const double next_a = ring_phase[r] + 2.0 * std::numbers::pi * (ia + 1) / na;
        const double next_b = ring_phase[r + 1] + 2.0 * std::numbers::pi * (ib + 1) / nb;
        if (ib >= nb || (ia < na && next_a <= next_b)) {
          out.faces.push_back({ring_vertex(r, ia), ring_vertex(r, ia + 1), ring_vertex(r + 1, ib)});
          ++ia;
        } else {
          out.faces.push_back(
              {ring_vertex(r, ia), ring_vertex(r + 1, ib + 1), ring_vertex(r + 1, ib)});
          ++ib;
        }
      }
    }
    for (int k = 0; k < rings[nr - 1]; ++k) {
      out.faces.push_back({apex_hi, ring_vertex(nr - 1, k), ring_vertex(nr - 1, k + 1)});
    }
  }
  if (next != num_vertices) throw ContractViolation("template vertex budget mismatch");
  return out;
}

}  // namespace

TemplateBody build_template(const TemplateConfig& cfg_in, Gender gender) {
  if (cfg_in.num_vertices < 200) throw ConfigError("template needs at least 200 vertices");
  for (int i = 0; i < kNumMeasures; ++i) {
    if (!(cfg_in.measures[i] > 0.0) || !std::isfinite(cfg_in.measures[i])) {
      throw ConfigError("template measure '" + std::string(kMeasureNames[i]) +
                        "' must be positive");
    }
  }
  const TemplateConfig cfg = gender == Gender::female ? female_scaled(cfg_in) : cfg_in;
  const int n = cfg.num_vertices;
  const auto layout = plan_layout(n);
  const RawMesh base = build_geometry(cfg.measures, layout, n);

  TemplateBody tpl;
  tpl.gender_tag = gender;
  tpl.rest_vertices = base.vertices;
  tpl.joint_rest_positions = joints_from_measures(cfg.measures);
  tpl.skin_weights = base.weights;
  tpl.faces.resize(static_cast<Eigen::Index>(base.faces.size()), 3);
  for (std::size_t f = 0; f < base.faces.size(); ++f) {
    for (int a = 0; a < 3; ++a) tpl.faces(static_cast<Eigen::Index>(f), a) = base.faces[f][a];
  }

  // The construction is linear in the measurements, so a finite difference
  // of one shape step is the exact basis column.
  tpl.shape_basis = Eigen::MatrixXd::Zero(3 * n, kNumBetas);
  tpl.joint_shape_basis = Eigen::MatrixXd::Zero(3 * kNumJoints, kNumBetas);
  for (int k = 0; k < kNumBetas; ++k) {
    auto m = cfg.measures;
    for (int idx : shape_group(k)) m[idx] *= 1.0 + kShapeStep;
    const RawMesh moved = build_geometry(m, layout, n);
    const JointMatrix jm = joints_from_measures(m);
    for (int v = 0; v < n; ++v) {
      for (int a = 0; a < 3; ++a) {
        tpl.shape_basis(3 * v + a, k) = moved.vertices(v, a) - base.vertices(v, a);
      }
    }
    for (int jj = 0; jj < kNumJoints; ++jj) {
      for (int a = 0; a < 3; ++a) {
        tpl.joint_shape_basis(3 * jj + a, k) = jm(jj, a) - tpl.joint_rest_positions(jj, a);
      }
    }
  }
  return tpl;
}

BodyModel::BodyModel(const TemplateConfig& cfg)
    : female(build_template(cfg, Gender::female)), male(build_template(cfg, Gender::male)) {}

const TemplateBody& BodyModel::select(double g) const { return g >= 0.5 ? male : female; }

const BodyModel& default_body_model() {
  static const BodyModel model{};
  return model;
}

const TemplateBody& select_template(double g) { return default_body_model().select(g); }

namespace {

void check_dims(const TemplateBody& tpl) {
  const int n = tpl.num_vertices();
  require(tpl.skin_weights.rows() == n && tpl.skin_weights.cols() == kNumJoints,
          "skin_weights must be N x 22");
  require(tpl.shape_basis.rows() == 3 * n && tpl.shape_basis.cols() == kNumBetas,
          "shape_basis must be 3N x 10");
  require(tpl.joint_shape_basis.rows() == 3 * kNumJoints &&
              tpl.joint_shape_basis.cols() == kNumBetas,
          "joint_shape_basis must be 66 x 10");
}

JointMatrix shaped_joints(const TemplateBody& tpl, const BetaVector& beta) {
  JointMatrix j = tpl.joint_rest_positions;
  const Eigen::VectorXd dj = tpl.joint_shape_basis * beta;
  for (int jj = 0; jj < kNumJoints; ++jj) {
    for (int a = 0; a < 3; ++a) j(jj, a) += dj[3 * jj + a];
  }
  return j;
}

}  // namespace

std::array<Eigen::Matrix4d, kNumJoints> joint_transforms(const TemplateBody& tpl,
                                                         const BodyParams& params) {
  check_dims(tpl);
  const JointMatrix j = shaped_joints(tpl, params.beta);
  std::array<Eigen::Matrix4d, kNumJoints> g{};
  for (int jj = 0; jj < kNumJoints; ++jj) {
    Mat3 r = axis_angle_to_matrix(params.theta.row(jj).transpose());
    Eigen::Matrix4d local = Eigen::Matrix4d::Identity();
    const int par = tpl.parent[jj];
    if (par == kRootParent) {
      r = axis_angle_to_matrix(params.alpha) * r;
      local.block<3, 1>(0, 3) = j.row(jj).transpose();
    } else {
      local.block<3, 1>(0, 3) = (j.row(jj) - j.row(par)).transpose();
    }
    local.block<3, 3>(0, 0) = r;
    g[jj] = par == kRootParent ? local : Eigen::Matrix4d(g[par] * local);
  }
  return g;
}

Mesh forward(const TemplateBody& tpl, const BodyParams& params) {
  check_dims(tpl);
  const int n = tpl.num_vertices();
  const JointMatrix j = shaped_joints(tpl, params.beta);
  const auto g = joint_transforms(tpl, params);

  // Skinning transforms: A_j = G_j * [I | -J_j].
  std::array<Eigen::Matrix<double, 3, 4>, kNumJoints> a{};
  for (int jj = 0; jj < kNumJoints; ++jj) {
    a[jj].leftCols<3>() = g[jj].block<3, 3>(0, 0);
    a[jj].col(3) = g[jj].block<3, 1>(0, 3) - g[jj].block<3, 3>(0, 0) * j.row(jj).transpose();
  }

  const Eigen::VectorXd dv = tpl.shape_basis * params.beta;
  Mesh mesh;
  mesh.vertices.resize(n, 3);
  for (int v = 0; v < n; ++v) {
    const Vec3 rest(tpl.rest_vertices(v, 0) + dv[3 * v], tpl.rest_vertices(v, 1) + dv[3 * v + 1],
                    tpl.rest_vertices(v, 2) + dv[3 * v + 2]);
    Eigen::Matrix<double, 3, 4> t = Eigen::Matrix<double, 3, 4>::Zero();
    for (int jj = 0; jj < kNumJoints; ++jj) {
      const double w = tpl.skin_weights(v, jj);
      if (w != 0.0) t += w * a[jj];
    }
    const Vec3 p = t.leftCols<3>() * rest + t.col(3) + params.tau;
    mesh.vertices.row(v) = p.transpose();
  }
  for (int jj = 0; jj < kNumJoints; ++jj) {
    mesh.joints.row(jj) = (g[jj].block<3, 1>(0, 3) + params.tau).transpose();
  }
  return mesh;
}

}  // namespace radarmesh
