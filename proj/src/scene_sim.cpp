// SPDX-License-Identifier: Apache-2.0
#include "radarmesh/scene_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "radarmesh/errors.hpp"
#include "radarmesh/geometry.hpp"
#include "radarmesh/rng.hpp"

namespace radarmesh {

Action parse_action(const std::string& name) {
  if (name == "walk") return Action::walk;
  if (name == "arm-raise" || name == "arm_raise") return Action::arm_raise;
  if (name == "squat") return Action::squat;
  if (name == "turn") return Action::turn;
  if (name == "idle") return Action::idle;
  throw ConfigError("unknown action '" + name + "'");
}

std::string action_name(Action a) {
  switch (a) {
    case Action::walk: return "walk";
    case Action::arm_raise: return "arm-raise";
    case Action::squat: return "squat";
    case Action::turn: return "turn";
    case Action::idle: return "idle";
  }
  return "idle";
}

const std::vector<Action>& all_actions() {
  static const std::vector<Action> actions = {Action::walk, Action::arm_raise, Action::squat,
                                              Action::turn, Action::idle};
  return actions;
}

namespace {

Mat3 rot_x(double a) { return axis_angle_to_matrix(Vec3(a, 0.0, 0.0)); }
Mat3 rot_y(double a) { return axis_angle_to_matrix(Vec3(0.0, a, 0.0)); }

void set_joint(BodyParams& p, int j, const Vec3& aa) { p.theta.row(j) = aa.transpose(); }

// Pelvis height that puts the lowest rest-pose vertex on the floor.
double standing_height(const BetaVector& beta, double gender) {
  BodyParams p;
  p.beta = beta;
  p.g = gender;
  const Mesh m = forward(select_template(gender), p);
  return -m.vertices.col(2).minCoeff();
}

double shaped_leg_length(const BetaVector& beta, double gender) {
  const TemplateBody& tpl = select_template(gender);
  BodyParams p;
  p.beta = beta;
  const auto g = joint_transforms(tpl, p);
  return g[1](2, 3) - g[7](2, 3);
}

}  // namespace

std::vector<BodyParams> sample_motion_sequence(const MotionSpec& spec, int n_frames,
                                               std::uint64_t seed) {
  require(n_frames >= 1, "n_frames must be positive");
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  std::normal_distribution<double> gauss(0.0, 1.0);

  const double height = standing_height(spec.beta, spec.gender) + spec.floor_z;
  const double leg = shaped_leg_length(spec.beta, spec.gender);

  BodyParams base;
  base.beta = spec.beta;
  base.g = spec.gender;
  double heading = uni(-2.5, 2.5);
  const Vec3 start(uni(spec.area_lo.x(), spec.area_hi.x()), uni(spec.area_lo.y(), spec.area_hi.y()),
                   height);
  const double arm_down_l = uni(1.15, 1.4);
  const double arm_down_r = uni(1.15, 1.4);
  const double elbow_l = uni(0.0, 0.3);
  const double elbow_r = uni(0.0, 0.3);
  for (int j : {3, 6, 9}) set_joint(base, j, Vec3(0.04 * gauss(rng), 0.03 * gauss(rng), 0.03 * gauss(rng)));
  set_joint(base, 15, Vec3(0.05 * gauss(rng), 0.0, 0.08 * gauss(rng)));
  set_joint(base, 18, Vec3(0.0, 0.0, -elbow_l));
  set_joint(base, 19, Vec3(0.0, 0.0, elbow_r));
  const double t0 = uni(0.0, 100.0);

  // Action-specific draws happen up front so the trajectory is a pure
  // function of (spec, seed).
  const double walk_omega = uni(0.4, 0.55);
  const double walk_hip = uni(0.25, 0.4);
  const double walk_knee = uni(0.3, 0.6);
  const double walk_speed = uni(0.06, 0.12);
  const double raise_period = uni(34.0, 44.0);
  const double raise_top = uni(-1.2, -0.6);
  const int raise_side = static_cast<int>(uni(0.0, 3.0));  // 0 left, 1 right, 2 both
  const double squat_depth = uni(0.6, 1.1);
  const double squat_omega = 0.22;
  double turn_rate = uni(0.08, 0.2) * (uni(0.0, 1.0) < 0.5 ? -1.0 : 1.0);
  if (n_frames > 1 && std::abs(turn_rate) * (n_frames - 1) > 5.0) {
    turn_rate = std::copysign(5.0 / (n_frames - 1), turn_rate);
  }
  if (spec.action == Action::turn && n_frames > 1) {
    const double span = std::abs(turn_rate) * (n_frames - 1);
    heading = uni(-2.5, 2.5 - span);
    if (turn_rate < 0.0) heading += span;
  }

  std::vector<BodyParams> out;
  out.reserve(n_frames);
  for (int t = 0; t < n_frames; ++t) {
    const double ta = t0 + t;
    BodyParams p = base;
    double psi = heading;
    Vec3 tau = start;
    double arm_l = arm_down_l;
    double arm_r = arm_down_r;
    double swing = 0.0;
    switch (spec.action) {
      case Action::idle:
        break;
      case Action::walk: {
        const double phi = walk_omega * ta;
        set_joint(p, 1, Vec3(-walk_hip * std::sin(phi), 0.0, 0.0));
        set_joint(p, 2, Vec3(walk_hip * std::sin(phi), 0.0, 0.0));
        set_joint(p, 4, Vec3(walk_knee * 0.5 * (1.0 + std::sin(phi + 1.2)), 0.0, 0.0));
        set_joint(p, 5, Vec3(walk_knee * 0.5 * (1.0 + std::sin(phi + std::numbers::pi + 1.2)), 0.0, 0.0));
        swing = 0.6 * walk_hip * std::sin(phi);
        const Vec3 fwd(std::sin(psi), -std::cos(psi), 0.0);
        tau = start + walk_speed * t * fwd;
        tau.z() += 0.01 * std::sin(2.0 * phi);
        break;
      }
      case Action::arm_raise: {
        const double s = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * ta / raise_period));
        if (raise_side != 1) arm_l = arm_down_l - (arm_down_l - raise_top) * s;
        if (raise_side != 0) arm_r = arm_down_r - (arm_down_r - raise_top) * s;
        break;
      }
      case Action::squat: {
        const double phi = squat_depth * 0.5 * (1.0 - std::cos(squat_omega * ta));
        set_joint(p, 1, Vec3(-phi, 0.0, 0.0));
        set_joint(p, 2, Vec3(-phi, 0.0, 0.0));
        set_joint(p, 4, Vec3(2.0 * phi, 0.0, 0.0));
        set_joint(p, 5, Vec3(2.0 * phi, 0.0, 0.0));
        set_joint(p, 7, Vec3(-phi, 0.0, 0.0));
        set_joint(p, 8, Vec3(-phi, 0.0, 0.0));
        const Vec3 lean = p.theta.row(3).transpose() + Vec3(-0.3 * phi, 0.0, 0.0);
        set_joint(p, 3, lean);
        tau.z() = height - leg * (1.0 - std::cos(phi));
        break;
      }
      case Action::turn:
        psi = heading + turn_rate * t;
        break;
    }
    p.alpha = Vec3(0.0, 0.0, psi);
    p.tau = tau;
    set_joint(p, 16, matrix_to_axis_angle(rot_x(-swing) * rot_y(arm_l)));
    set_joint(p, 17, matrix_to_axis_angle(rot_x(swing) * rot_y(-arm_r)));
    out.push_back(p);
  }
  return out;
}

std::vector<int> hidden_point_removal(const Points& points, const Vec3& viewpoint,
                                      std::optional<double> radius_param) {
  const auto m = points.rows();
  if (m < 4) throw DegenerateGeometryError("hidden point removal needs at least 4 points");
  double max_dist = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    max_dist = std::max(max_dist, (points.row(i).transpose() - viewpoint).norm());
  }
  if (!(max_dist > 0.0)) throw DegenerateGeometryError("all points coincide with the viewpoint");
  const double radius = radius_param.value_or(10.0 * max_dist);
  require(radius > max_dist, "HPR radius must exceed the largest point distance");

  Points flipped(m + 1, 3);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Vec3 d = points.row(i).transpose() - viewpoint;
    const double n = d.norm();
    if (n == 0.0) {
      flipped.row(i) = d.transpose();
      continue;
    }
    flipped.row(i) = (d + 2.0 * (radius - n) * d / n).transpose();
  }
  flipped.row(m) = Vec3::Zero().transpose();
  const std::vector<int> hull = convex_hull_vertices(flipped);
  std::vector<int> visible;
  visible.reserve(hull.size());
  for (int idx : hull) {
    if (idx < m) visible.push_back(idx);
  }
  return visible;
}

OccupancyResult voxelize_occupancy(const Points& points, const GridSpec& grid) {
  require(grid.valid(), "invalid grid");
  OccupancyResult r{{grid, Volume<std::uint8_t>(grid.dims, 0)}, 0};
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const auto v = grid.voxel_of(points.row(i).transpose());
    if (!v) {
      ++r.dropped;
      continue;
    }
    r.map.values.at(*v) = 1;
  }
  return r;
}

IntensityResult voxelize_max_intensity(const Points& points, const std::vector<double>& intensities,
                                       const GridSpec& grid) {
  require(grid.valid(), "invalid grid");
  require(intensities.size() == static_cast<std::size_t>(points.rows()),
          "one intensity per point required");
  IntensityResult r{FloatVolume(grid.dims, 0.0f), 0};
  std::vector<char> touched(r.values.size(), 0);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const auto v = grid.voxel_of(points.row(i).transpose());
    if (!v) {
      ++r.dropped;
      continue;
    }
    const std::size_t idx = grid.linear(*v);
    const auto val = static_cast<float>(intensities[static_cast<std::size_t>(i)]);
    if (!touched[idx] || val > r.values.data[idx]) r.values.data[idx] = val;
    touched[idx] = 1;
  }
  return r;
}

ClutterConfig ClutterConfig::none() {
  ClutterConfig c;
  c.wall = false;
  c.static_reflectors = 0;
  c.ghosts = 0;
  c.noise_sigma = 0.0;
  c.speckle_sigma = 0.0;
  return c;
}

FloatVolume render_clutter(const GridSpec& grid, const ClutterConfig& cfg, std::uint64_t seed) {
  FloatVolume vol(grid.dims, 0.0f);
  std::mt19937_64 scene(mix_seed(cfg.scene_seed, 0x5ce9e));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const Vec3 ext = grid.extent();
  if (cfg.wall) {
    const auto wv = grid.voxel_of(grid.origin + Vec3(0.5 * ext.x(), ext.y() - cfg.wall_offset, 0.5 * ext.z()));
    if (wv) {
      for (int i = 0; i < grid.dims[0]; ++i) {
        for (int k = 0; k < grid.dims[2]; ++k) {
          vol.at(i, (*wv)[1], k) += static_cast<float>(cfg.wall_strength * (0.5 + 0.5 * u01(scene)));
        }
      }
    }
  }
  for (int r = 0; r < cfg.static_reflectors; ++r) {
    const Vec3 c = grid.origin + Vec3((0.05 + 0.9 * u01(scene)) * ext.x(),
                                      (0.1 + 0.8 * u01(scene)) * ext.y(),
                                      (0.1 + 0.4 * u01(scene)) * ext.z());
    const double strength = cfg.reflector_strength * (0.5 + 0.5 * u01(scene));
    const Index3 cv = grid.raw_index(c);
    const int half = 1 + static_cast<int>(u01(scene) * 1.5);
    for (int di = -half; di <= half; ++di) {
      for (int dj = -half; dj <= half; ++dj) {
        for (int dk = -half; dk <= half; ++dk) {
          const Index3 v{cv[0] + di, cv[1] + dj, cv[2] + dk};
          if (grid.contains(v)) vol.at(v) += static_cast<float>(strength);
        }
      }
    }
  }
  if (cfg.noise_sigma > 0.0) {
    std::mt19937_64 noise(mix_seed(seed, 0x2015e));
    for (float& x : vol.data) {
      const double u = u01(noise);
      x += static_cast<float>(cfg.noise_sigma * std::sqrt(-2.0 * std::log1p(-u)));
    }
  }
  return vol;
}

SimulatedFrame simulate_frame(const Mesh& mesh, const Vec3& sensor_pos, const GridSpec& grid,
                              const ClutterConfig& cfg, std::uint64_t seed) {
  require(grid.valid(), "invalid grid");
  const Points& verts = mesh.vertices;
  int inside = 0;
  for (Eigen::Index i = 0; i < verts.rows(); ++i) {
    if (grid.voxel_of(verts.row(i).transpose())) ++inside;
  }
  if (inside == 0) throw EmptyFrameError("mesh lies entirely outside the radar grid");

  SimulatedFrame out;
  out.visible = hidden_point_removal(verts, sensor_pos);
  Points vis(static_cast<Eigen::Index>(out.visible.size()), 3);
  for (std::size_t i = 0; i < out.visible.size(); ++i) {
    vis.row(static_cast<Eigen::Index>(i)) = verts.row(out.visible[i]);
  }
  out.occupancy = voxelize_occupancy(vis, grid).map;

  std::mt19937_64 rng(mix_seed(seed, 0xb0d7));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> amp(out.visible.size());
  const double s = cfg.speckle_sigma;
  for (std::size_t i = 0; i < amp.size(); ++i) {
    const double r = (vis.row(static_cast<Eigen::Index>(i)).transpose() - sensor_pos).norm();
    const double speckle = s > 0.0 ? std::exp(s * gauss(rng) - 0.5 * s * s) : 1.0;
    amp[i] = cfg.i0 / (r * r) * speckle;
  }
  out.intensity = voxelize_max_intensity(vis, amp, grid).values;

  if (cfg.ghosts > 0 && vis.rows() > 0) {
    const Vec3 centroid = vis.colwise().mean().transpose();
    const Vec3 range_dir = (centroid - sensor_pos).normalized();
    std::mt19937_64 scene(mix_seed(cfg.scene_seed, 0x9405));
    std::uniform_real_distribution<double> jitter(-0.3, 0.3);
    for (int k = 1; k <= cfg.ghosts; ++k) {
      const Vec3 offset = k * cfg.ghost_spacing * range_dir + Vec3(jitter(scene), 0.0, 0.5 * jitter(scene));
      Points moved = vis;
      moved.rowwise() += offset.transpose();
      std::vector<double> a = amp;
      const double att = std::pow(cfg.ghost_attenuation, k);
      for (double& x : a) x *= att;
      const FloatVolume ghost = voxelize_max_intensity(moved, a, grid).values;
      for (std::size_t i = 0; i < ghost.size(); ++i) out.intensity.data[i] += ghost.data[i];
    }
  }

  const FloatVolume clutter = render_clutter(grid, cfg, seed);
  for (std::size_t i = 0; i < clutter.size(); ++i) out.intensity.data[i] += clutter.data[i];

  if (cfg.normalize) {
    const float mx = *std::max_element(out.intensity.data.begin(), out.intensity.data.end());
    if (mx > 0.0f) {
      for (float& x : out.intensity.data) x /= mx;
    }
  }
  return out;
}

FlowVolume make_scene_flow_gt(const Mesh& prev, const Mesh& curr, const GridSpec& roi_grid,
                              const std::vector<int>& visible_curr) {
  require(prev.vertices.rows() == curr.vertices.rows(),
          "scene flow needs meshes with matching vertex counts");
  FlowVolume flow;
  flow.grid = roi_grid;
  for (auto& c : flow.values) c = FloatVolume(roi_grid.dims, 0.0f);
  std::vector<double> sum(3 * roi_grid.num_voxels(), 0.0);
  std::vector<int> count(roi_grid.num_voxels(), 0);
  for (int idx : visible_curr) {
    require(idx >= 0 && idx < curr.vertices.rows(), "visible index out of range");
    const Vec3 pc = curr.vertices.row(idx).transpose();
    const auto v = roi_grid.voxel_of(pc);
    if (!v) continue;
    const std::size_t lin = roi_grid.linear(*v);
    const Vec3 d = pc - prev.vertices.row(idx).transpose();
    for (int a = 0; a < 3; ++a) sum[3 * lin + a] += d[a];
    count[lin] += 1;
  }
  for (std::size_t lin = 0; lin < count.size(); ++lin) {
    if (count[lin] == 0) continue;
    for (int a = 0; a < 3; ++a) {
      flow.values[a].data[lin] = static_cast<float>(sum[3 * lin + a] / count[lin]);
    }
  }
  return flow;
}

FlowVolume make_scene_flow_gt(const Mesh& prev, const Mesh& curr, const GridSpec& roi_grid,
                              const Vec3& sensor_pos) {
  require(prev.vertices.rows() == curr.vertices.rows(),
          "scene flow needs meshes with matching vertex counts");
  return make_scene_flow_gt(prev, curr, roi_grid, hidden_point_removal(curr.vertices, sensor_pos));
}

FloatVolume make_pseudo_tensor(const Points& points, const std::vector<double>& intensities,
                               const GridSpec& grid) {
  return voxelize_max_intensity(points, intensities, grid).values;
}

Points sample_surface_points(const Mesh& mesh, const TemplateBody& topology, int n,
                             std::uint64_t seed) {
  require(n >= 1, "need at least one sample");
  require(mesh.vertices.rows() == topology.rest_vertices.rows(), "mesh/topology mismatch");
  const auto& faces = topology.faces;
  const auto nf = faces.rows();
  std::vector<double> cum(static_cast<std::size_t>(nf));
  double total = 0.0;
  auto vert = [&](int i) -> Vec3 { return mesh.vertices.row(i).transpose(); };
  for (Eigen::Index f = 0; f < nf; ++f) {
    const Vec3 a = vert(faces(f, 0));
    const Vec3 b = vert(faces(f, 1));
    const Vec3 c = vert(faces(f, 2));
    total += 0.5 * (b - a).cross(c - a).norm();
    cum[static_cast<std::size_t>(f)] = total;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Points out(n, 3);
  for (int i = 0; i < n; ++i) {
    const double pick = u01(rng) * total;
    auto it = std::upper_bound(cum.begin(), cum.end(), pick);
    const auto f = std::min<Eigen::Index>(static_cast<Eigen::Index>(it - cum.begin()), nf - 1);
    const double r1 = std::sqrt(u01(rng));
    const double r2 = u01(rng);
    const Vec3 a = vert(faces(f, 0));
    const Vec3 b = vert(faces(f, 1));
    const Vec3 c = vert(faces(f, 2));
    out.row(i) = ((1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c).transpose();
  }
  return out;
}

LabeledSequence simulate_sequence(const SceneConfig& scene, const SequenceSpec& spec,
                                  const BodyModel& body) {
  const int window = scene.window;
  require(window >= 2, "sequence window must be at least 2 frames");
  LabeledSequence seq;
  seq.action = action_name(spec.motion.action);
  seq.seed = spec.seed;
  seq.grid = scene.grid;
  seq.sensor_pos = scene.sensor_pos;
  seq.frame_rate = scene.frame_rate;
  seq.params = sample_motion_sequence(spec.motion, window, mix_seed(spec.seed, 1));
  const TemplateBody& tpl = body.select(spec.motion.gender);
  ClutterConfig clutter = scene.clutter;
  clutter.scene_seed = mix_seed(spec.seed, 2);
  for (int t = 0; t < window; ++t) {
    Mesh mesh = forward(tpl, seq.params[static_cast<std::size_t>(t)]);
    SimulatedFrame f = simulate_frame(mesh, scene.sensor_pos, scene.grid, clutter,
                                      mix_seed(spec.seed, 100 + static_cast<std::uint64_t>(t)));
    Vec3 c = Vec3::Zero();
    for (int idx : f.visible) c += mesh.vertices.row(idx).transpose();
    if (!f.visible.empty()) c /= static_cast<double>(f.visible.size());
    seq.gt_center.push_back(c);
    seq.teacher_points.push_back(sample_surface_points(
        mesh, tpl, scene.teacher_points, mix_seed(spec.seed, 200 + static_cast<std::uint64_t>(t))));
    seq.frames.push_back(std::move(f.intensity));
    seq.occupancy.push_back(std::move(f.occupancy));
    seq.visible.push_back(std::move(f.visible));
    seq.meshes.push_back(std::move(mesh));
  }
  Index3 cv = scene.grid.raw_index(seq.gt_center.back());
  for (int a = 0; a < 3; ++a) cv[a] = std::clamp(cv[a], 0, scene.grid.dims[a] - 1);
  seq.gt_roi_origin = roi_origin_for(scene.grid, cv, scene.roi_dims);
  seq.flow_gt = make_scene_flow_gt(seq.meshes[window - 2], seq.meshes[window - 1],
                                   scene.grid.sub_grid(seq.gt_roi_origin, scene.roi_dims),
                                   seq.visible.back());
  return seq;
}

}  // namespace radarmesh
