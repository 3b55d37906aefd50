// SPDX-License-Identifier: Apache-2.0
//
// World-frame mesh metrics, no root normalization or alignment.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "radarmesh/body.hpp"

namespace radarmesh {

// Mean per-vertex distance, millimeters.
double mve(const Points& pred, const Points& gt);
// Mean per-joint distance, millimeters. Both inputs must hold 22 rows.
double mje(const Points& pred, const Points& gt);
// Mean geodesic angle over corresponding rotations, degrees.
double mre(const std::vector<Vec3>& pred_aa, const std::vector<Vec3>& gt_aa);
// 22 joint rotations; joint 0 is R(alpha) R(theta_0). Without the root, the
// 21 non-root joints are averaged.
double mre(const BodyParams& pred, const BodyParams& gt, bool include_root = true);
// Root translation distance, millimeters.
double te(const Vec3& pred, const Vec3& gt);

struct FrameMetrics {
  std::string sequence;
  int frame = 0;
  double mve = 0;
  double mje = 0;
  double mre = 0;
  double te = 0;
};

FrameMetrics evaluate_frame(const BodyParams& pred, const BodyParams& gt, bool include_root = true);

struct EvalReport {
  double mve = 0;
  double mje = 0;
  double mre = 0;
  double te = 0;
  int n_frames = 0;
  std::vector<FrameMetrics> per_frame;

  // Unweighted means over frames.
  static EvalReport aggregate(std::vector<FrameMetrics> frames);
  [[nodiscard]] nlohmann::json to_json(bool with_frames = false) const;
  void write_csv(const std::filesystem::path& path) const;
};

}  // namespace radarmesh
