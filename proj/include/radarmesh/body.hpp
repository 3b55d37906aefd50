// SPDX-License-Identifier: Apache-2.0
//
// Procedural articulated body with the SMPL-X body parameter interface:
// root orientation (3), shape (10), translation (3), per-joint pose (22 x 3)
// and a gender probability. Templates are capsule-limb meshes built from a
// small set of named body measurements; the shape basis is the derivative of
// the construction with respect to grouped measurements.
#pragma once

#include <Eigen/Core>

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "radarmesh/grid.hpp"

namespace radarmesh {

inline constexpr int kNumJoints = 22;
inline constexpr int kNumBetas = 10;
// alpha(3) + beta(10) + tau(3) + theta(66)
inline constexpr int kNumContinuousParams = 3 + kNumBetas + 3 + 3 * kNumJoints;
inline constexpr int kRootParent = -1;

// SMPL-X body joint hierarchy (first 22 joints).
inline constexpr std::array<int, kNumJoints> kJointParents = {
    kRootParent, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19};

inline constexpr std::array<std::string_view, kNumJoints> kJointNames = {
    "pelvis",      "left_hip",       "right_hip",      "spine1",     "left_knee",
    "right_knee",  "spine2",         "left_ankle",     "right_ankle", "spine3",
    "left_foot",   "right_foot",     "neck",           "left_collar", "right_collar",
    "head",        "left_shoulder",  "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist",  "right_wrist"};

enum class Gender { female = 0, male = 1 };

using JointMatrix = Eigen::Matrix<double, kNumJoints, 3, Eigen::RowMajor>;
using BetaVector = Eigen::Matrix<double, kNumBetas, 1>;

struct BodyParams {
  Vec3 alpha = Vec3::Zero();
  BetaVector beta = BetaVector::Zero();
  Vec3 tau = Vec3::Zero();
  JointMatrix theta = JointMatrix::Zero();
  double g = 1.0;

  [[nodiscard]] bool valid() const;

  // [alpha, beta, tau, theta (row-major), g]: 83 values.
  [[nodiscard]] std::vector<double> to_vector() const;
  static BodyParams from_vector(const std::vector<double>& v);
};

// Body measurements in meters. Positions in the T-pose are linear in these,
// with the body facing -y, z up and its left side towards +x.
enum Measure : int {
  kHipHalfWidth, kHipDrop, kThigh, kShin, kAnkleHeight, kFootForward, kToeLength,
  kSpineLower, kSpineMid, kSpineUpper, kNeckHeight, kHeadHeight, kHeadTop,
  kCollarHeight, kCollarLateral, kShoulderLateral, kUpperArm, kForearm, kHand,
  kPelvisBottom,
  kPelvisRx, kPelvisRy, kWaistRx, kWaistRy, kChestRx, kChestRy, kNeckR, kHeadRx, kHeadRy,
  kThighR, kShinR, kFootR, kToeR, kCollarR, kUpperArmR, kForearmR, kHandR,
  kNumMeasures
};

extern const std::array<std::string_view, kNumMeasures> kMeasureNames;

struct TemplateConfig {
  int num_vertices = 1024;
  std::array<double, kNumMeasures> measures = default_measures();

  static std::array<double, kNumMeasures> default_measures();
};

// Measurement groups scaled by each shape coefficient; one unit of beta_k
// grows every measurement in group k by kShapeStep (5%).
inline constexpr double kShapeStep = 0.05;
const std::vector<int>& shape_group(int k);

// Female templates are the male construction with these per-measurement
// multipliers applied (see README for the table).
TemplateConfig female_scaled(const TemplateConfig& cfg);

struct TemplateBody {
  Points rest_vertices;                  // N x 3
  JointMatrix joint_rest_positions;      // 22 x 3
  std::array<int, kNumJoints> parent = kJointParents;
  Eigen::MatrixXd skin_weights;          // N x 22
  Eigen::MatrixXd shape_basis;           // 3N x 10, row 3*v + axis
  Eigen::MatrixXd joint_shape_basis;     // 66 x 10, row 3*j + axis
  Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor> faces;
  Gender gender_tag = Gender::male;

  [[nodiscard]] int num_vertices() const { return static_cast<int>(rest_vertices.rows()); }
};

struct Mesh {
  Points vertices;   // N x 3, world frame
  JointMatrix joints = JointMatrix::Zero();
};

TemplateBody build_template(const TemplateConfig& cfg, Gender gender);

// Male and female templates sharing topology.
struct BodyModel {
  TemplateBody female;
  TemplateBody male;

  explicit BodyModel(const TemplateConfig& cfg = {});
  [[nodiscard]] const TemplateBody& select(double g) const;
  [[nodiscard]] const TemplateBody& get(Gender gender) const {
    return gender == Gender::male ? male : female;
  }
};

// Male when g >= 0.5, female otherwise. Uses the default-config model.
const TemplateBody& select_template(double g);
const BodyModel& default_body_model();

// Shape blend, forward kinematics (alpha composed with theta[0] at the root),
// linear blend skinning, then translation by tau.
Mesh forward(const TemplateBody& tpl, const BodyParams& params);

// Global 4x4 joint transforms before translation, used by the skinning path
// and exposed for tests of the kinematic chain.
std::array<Eigen::Matrix4d, kNumJoints> joint_transforms(const TemplateBody& tpl,
                                                         const BodyParams& params);

}  // namespace radarmesh
