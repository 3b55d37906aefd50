// SPDX-License-Identifier: Apache-2.0
//
// Synthetic radar observation model and ground-truth factory.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "radarmesh/body.hpp"
#include "radarmesh/grid.hpp"

namespace radarmesh {

inline constexpr int kDefaultWindow = 4;

enum class Action { walk, arm_raise, squat, turn, idle };

Action parse_action(const std::string& name);
std::string action_name(Action a);
const std::vector<Action>& all_actions();

struct MotionSpec {
  Action action = Action::idle;
  BetaVector beta = BetaVector::Zero();
  double gender = 1.0;
  // Start positions of the pelvis are drawn uniformly in [area_lo, area_hi] (x, y).
  Eigen::Vector2d area_lo{3.0, 2.5};
  Eigen::Vector2d area_hi{9.0, 7.0};
  double floor_z = 0.0;
};

// Upper bounds on per-frame change that every generated sequence obeys.
inline constexpr double kMaxJointStep = 0.3;         // rad, axis-angle difference norm
inline constexpr double kMaxTranslationStep = 0.15;  // m

std::vector<BodyParams> sample_motion_sequence(const MotionSpec& spec, int n_frames,
                                               std::uint64_t seed);

// Katz hidden point removal: spherical flipping about the viewpoint followed
// by convex-hull membership. radius_param must exceed the largest
// point-to-viewpoint distance; when omitted it is 10x that distance.
std::vector<int> hidden_point_removal(const Points& points, const Vec3& viewpoint,
                                      std::optional<double> radius_param = std::nullopt);

struct OccupancyResult {
  OccupancyMap map;
  int dropped = 0;  // points outside the grid
};

struct IntensityResult {
  FloatVolume values;
  int dropped = 0;
};

OccupancyResult voxelize_occupancy(const Points& points, const GridSpec& grid);
// Max-intensity aggregation per voxel.
IntensityResult voxelize_max_intensity(const Points& points, const std::vector<double>& intensities,
                                       const GridSpec& grid);

struct ClutterConfig {
  double i0 = 25.0;             // body return is i0 / r^2 times speckle
  double speckle_sigma = 0.35;  // lognormal sigma of per-vertex speckle
  bool wall = true;
  double wall_offset = 0.5;     // wall plane distance from the far y edge (m)
  double wall_strength = 0.25;
  int static_reflectors = 3;    // furniture-like static blobs
  double reflector_strength = 0.5;
  int ghosts = 2;               // multipath copies of the body return
  double ghost_spacing = 1.0;   // m, displacement per ghost along the range direction
  double ghost_attenuation = 0.45;
  double noise_sigma = 0.02;    // Rayleigh scale of the noise floor
  bool normalize = true;        // divide each frame by its maximum
  std::uint64_t scene_seed = 0; // static clutter layout

  static ClutterConfig none();
};

struct SimulatedFrame {
  FloatVolume intensity;
  OccupancyMap occupancy;
  std::vector<int> visible;  // indices of visible mesh vertices
};

// Static wall/reflector returns plus the noise floor, no body.
FloatVolume render_clutter(const GridSpec& grid, const ClutterConfig& cfg, std::uint64_t seed);

// Throws EmptyFrameError when no mesh vertex falls inside the grid.
SimulatedFrame simulate_frame(const Mesh& mesh, const Vec3& sensor_pos, const GridSpec& grid,
                              const ClutterConfig& cfg, std::uint64_t seed);

// Mean displacement of current-frame visible vertices per RoI voxel.
FlowVolume make_scene_flow_gt(const Mesh& prev, const Mesh& curr, const GridSpec& roi_grid,
                              const std::vector<int>& visible_curr);
FlowVolume make_scene_flow_gt(const Mesh& prev, const Mesh& curr, const GridSpec& roi_grid,
                              const Vec3& sensor_pos);

FloatVolume make_pseudo_tensor(const Points& points, const std::vector<double>& intensities,
                               const GridSpec& grid);

// Area-weighted uniform samples over the full mesh surface.
Points sample_surface_points(const Mesh& mesh, const TemplateBody& topology, int n,
                             std::uint64_t seed);

struct SceneConfig {
  GridSpec grid;
  Vec3 sensor_pos{6.05, 0.0, 1.2};
  double frame_rate = 10.0;
  int window = kDefaultWindow;
  Index3 roi_dims{32, 32, 24};
  int teacher_points = 512;
  ClutterConfig clutter;
};

struct SequenceSpec {
  MotionSpec motion;
  std::uint64_t seed = 0;
};

struct LabeledSequence {
  std::string action;
  std::uint64_t seed = 0;
  GridSpec grid;
  Vec3 sensor_pos = Vec3::Zero();
  double frame_rate = 10.0;
  std::vector<FloatVolume> frames;
  std::vector<BodyParams> params;
  std::vector<Mesh> meshes;
  std::vector<OccupancyMap> occupancy;
  std::vector<std::vector<int>> visible;
  std::vector<Vec3> gt_center;  // mean of each frame's visible vertices
  Index3 gt_roi_origin{0, 0, 0};
  FlowVolume flow_gt;  // last frame, on the RoI centered at the last gt_center
  std::vector<Points> teacher_points;

  [[nodiscard]] int window() const { return static_cast<int>(frames.size()); }
};

LabeledSequence simulate_sequence(const SceneConfig& scene, const SequenceSpec& spec,
                                  const BodyModel& body);

}  // namespace radarmesh
