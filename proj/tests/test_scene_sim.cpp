#include "test_support.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <numbers>
#include <queue>
#include <random>

#include "radarmesh/errors.hpp"
#include "radarmesh/geometry.hpp"
#include "radarmesh/scene_sim.hpp"

using namespace radarmesh;

namespace {

GridSpec tiny_grid() {
  GridSpec g;
  g.dims = {61, 56, 16};
  g.voxel_size = Vec3(0.2, 0.2, 0.2);
  return g;
}

int count_components(const FloatVolume& v, float thresh) {
  std::vector<char> seen(v.size(), 0);
  int comps = 0;
  const Index3 d = v.dims;
  for (std::size_t s = 0; s < v.size(); ++s) {
    if (seen[s] || v.data[s] <= thresh) continue;
    ++comps;
    std::queue<std::size_t> q;
    q.push(s);
    seen[s] = 1;
    while (!q.empty()) {
      const std::size_t c = q.front();
      q.pop();
      const int i = static_cast<int>(c / (d[1] * d[2]));
      const int j = static_cast<int>((c / d[2]) % d[1]);
      const int k = static_cast<int>(c % d[2]);
      for (int di = -1; di <= 1; ++di)
        for (int dj = -1; dj <= 1; ++dj)
          for (int dk = -1; dk <= 1; ++dk) {
            const int a = i + di, b = j + dj, e = k + dk;
            if (a < 0 || b < 0 || e < 0 || a >= d[0] || b >= d[1] || e >= d[2]) continue;
            const std::size_t n = v.index(a, b, e);
            if (!seen[n] && v.data[n] > thresh) {
              seen[n] = 1;
              q.push(n);
            }
          }
    }
  }
  return comps;
}

Mesh mesh_at(const Vec3& tau, double yaw = 0.0) {
  BodyParams p;
  p.tau = tau;
  p.alpha = Vec3(0, 0, yaw);
  return forward(select_template(1.0), p);
}

}  // namespace

TEST_CASE("action names") {
  for (Action a : all_actions()) CHECK(parse_action(action_name(a)) == a);
  CHECK_THROWS_AS(parse_action("jump"), ConfigError);
}

TEST_CASE("hidden point removal on a sphere matches the analytic horizon") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  const int n = 2000;
  Points p(n, 3);
  for (int i = 0; i < n; ++i) p.row(i) = Vec3(g(rng), g(rng), g(rng)).normalized().transpose();
  const auto vis = hidden_point_removal(p, Vec3(0, 0, 5));
  std::vector<char> is_vis(n, 0);
  for (int i : vis) is_vis[i] = 1;
  int agree = 0, total = 0;
  for (int i = 0; i < n; ++i) {
    const double z = p(i, 2);
    if (std::abs(z - 0.2) < 0.1) continue;  // near the horizon
    ++total;
    agree += (is_vis[i] != 0) == (z > 0.2);
  }
  CHECK(static_cast<double>(agree) / total > 0.97);
  CHECK_THROWS_AS(hidden_point_removal(p, Vec3(0, 0, 5), 2.0), ContractViolation);
}

TEST_CASE("voxelization is half-open and counts drops") {
  GridSpec g;
  g.dims = {4, 4, 4};
  g.voxel_size = Vec3(0.1, 0.1, 0.1);
  Points p(4, 3);
  p << 0.1, 0.05, 0.05,   // on the face between cells 0 and 1
      0.05, 0.05, 0.05,   //
      0.4, 0.0, 0.0,      // on the far face: outside
      -0.01, 0.0, 0.0;
  const auto occ = voxelize_occupancy(p, g);
  CHECK(occ.dropped == 2);
  CHECK(occ.map.values.at(1, 0, 0) == 1);
  CHECK(occ.map.values.at(0, 0, 0) == 1);
  const auto inten = voxelize_max_intensity(p, {0.3, 0.7, 1.0, 1.0}, g);
  CHECK(inten.values.at(1, 0, 0) == doctest::Approx(0.3));
  Points q(2, 3);
  q << 0.01, 0.01, 0.01, 0.02, 0.02, 0.02;
  CHECK(voxelize_max_intensity(q, {0.2, 0.9}, g).values.at(0, 0, 0) == doctest::Approx(0.9));
}

TEST_CASE("motion sequences respect per-frame bounds") {
  for (Action a : all_actions()) {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      MotionSpec spec;
      spec.action = a;
      spec.gender = seed % 2 ? 1.0 : 0.0;
      spec.beta[0] = 0.5 * (static_cast<double>(seed) - 3.0);
      const auto seq = sample_motion_sequence(spec, 40, seed);
      REQUIRE(seq.size() == 40);
      for (std::size_t t = 1; t < seq.size(); ++t) {
        CHECK((seq[t].tau - seq[t - 1].tau).norm() <= kMaxTranslationStep);
        for (int j = 0; j < kNumJoints; ++j) {
          CHECK((seq[t].theta.row(j) - seq[t - 1].theta.row(j)).norm() <= kMaxJointStep);
        }
        CHECK((seq[t].alpha - seq[t - 1].alpha).norm() <= kMaxJointStep);
        CHECK(seq[t].beta == seq[0].beta);
      }
    }
  }
}

TEST_CASE("action-specific trajectories") {
  MotionSpec spec;
  spec.action = Action::idle;
  auto idle = sample_motion_sequence(spec, 10, 4);
  CHECK(idle.front().to_vector() == idle.back().to_vector());
  const Mesh m = forward(select_template(1.0), idle.front());
  CHECK(m.vertices.col(2).minCoeff() == doctest::Approx(0.0).epsilon(1e-9));

  spec.action = Action::walk;
  auto walk = sample_motion_sequence(spec, 20, 4);
  const double psi = walk[0].alpha.z();
  const Vec3 fwd(std::sin(psi), -std::cos(psi), 0.0);
  for (std::size_t t = 1; t < walk.size(); ++t) {
    CHECK((walk[t].tau - walk[t - 1].tau).dot(fwd) > 0.05);
  }

  spec.action = Action::turn;
  auto turn = sample_motion_sequence(spec, 20, 4);
  for (std::size_t t = 1; t < turn.size(); ++t) {
    const double d = std::abs(turn[t].alpha.z() - turn[t - 1].alpha.z());
    CHECK(d >= 0.08 - 1e-12);
    CHECK(d <= 0.2 + 1e-12);
    CHECK(std::abs(turn[t].alpha.z()) <= 2.5);
  }

  spec.action = Action::squat;
  auto squat = sample_motion_sequence(spec, 40, 4);
  double lo = 1e9, hi = -1e9;
  for (const auto& p : squat) {
    lo = std::min(lo, p.tau.z());
    hi = std::max(hi, p.tau.z());
  }
  CHECK(hi - lo > 0.1);
}

TEST_CASE("frames outside the grid are rejected") {
  const GridSpec g = tiny_grid();
  CHECK_THROWS_AS(simulate_frame(mesh_at(Vec3(40, 40, 1)), Vec3(6.05, 0, 1.2), g,
                                 ClutterConfig::none(), 1),
                  EmptyFrameError);
}

TEST_CASE("clean frame only lights visible body voxels") {
  const GridSpec g = tiny_grid();
  const Mesh m = mesh_at(Vec3(6.0, 4.0, 1.0));
  const auto f = simulate_frame(m, Vec3(6.05, 0, 1.2), g, ClutterConfig::none(), 1);
  std::size_t lit = 0;
  for (std::size_t i = 0; i < f.intensity.size(); ++i) {
    const bool on = f.intensity.data[i] > 0.0f;
    CHECK(on == (f.occupancy.values.data[i] != 0));
    lit += on;
  }
  CHECK(lit > 20);
  CHECK(*std::max_element(f.intensity.data.begin(), f.intensity.data.end()) == doctest::Approx(1.0));
  // the sensor sees the front (-y side) of a body facing it
  double vis_y = 0.0;
  for (int i : f.visible) vis_y += m.vertices(i, 1);
  CHECK(vis_y / f.visible.size() < m.vertices.col(1).mean());
}

TEST_CASE("ghosts add one displaced copy each") {
  const GridSpec g = tiny_grid();
  const Mesh m = mesh_at(Vec3(6.0, 3.0, 1.0));
  ClutterConfig c = ClutterConfig::none();
  const auto clean = simulate_frame(m, Vec3(6.05, 0, 1.2), g, c, 1);
  CHECK(count_components(clean.intensity, 0.0f) == 1);
  c.ghosts = 2;
  c.ghost_spacing = 1.6;
  const auto ghosted = simulate_frame(m, Vec3(6.05, 0, 1.2), g, c, 1);
  CHECK(count_components(ghosted.intensity, 0.0f) == 3);
}

TEST_CASE("noise floor is Rayleigh") {
  ClutterConfig c = ClutterConfig::none();
  c.noise_sigma = 0.05;
  const auto v = render_clutter(tiny_grid(), c, 9);
  double mean = 0.0, sq = 0.0;
  for (float x : v.data) {
    mean += x;
    sq += double(x) * x;
  }
  mean /= v.size();
  sq /= v.size();
  CHECK(mean == doctest::Approx(0.05 * std::sqrt(std::numbers::pi / 2)).epsilon(0.01));
  CHECK(sq == doctest::Approx(2 * 0.05 * 0.05).epsilon(0.02));
}

TEST_CASE("scene flow of a rigid translation") {
  const Mesh a = mesh_at(Vec3(6.0, 4.0, 1.0));
  const Mesh b = mesh_at(Vec3(6.1, 3.95, 1.0));
  const GridSpec roi = tiny_grid().sub_grid({20, 10, 0}, {16, 16, 12});
  const auto flow = make_scene_flow_gt(a, b, roi, Vec3(6.05, 0, 1.2));
  int nonzero = 0;
  for (std::size_t i = 0; i < flow.values[0].size(); ++i) {
    if (flow.values[0].data[i] == 0.0f && flow.values[1].data[i] == 0.0f) continue;
    ++nonzero;
    CHECK(flow.values[0].data[i] == doctest::Approx(0.1).epsilon(1e-5));
    CHECK(flow.values[1].data[i] == doctest::Approx(-0.05).epsilon(1e-5));
    CHECK(std::abs(flow.values[2].data[i]) < 1e-6);
  }
  CHECK(nonzero > 10);
  Mesh bad = b;
  bad.vertices.conservativeResize(100, 3);
  CHECK_THROWS_AS(make_scene_flow_gt(a, bad, roi, std::vector<int>{}), ContractViolation);
}

TEST_CASE("surface samples are area weighted") {
  const TemplateBody& t = select_template(1.0);
  const Mesh body = forward(t, BodyParams{});
  const Points s = sample_surface_points(body, t, 500, 21);
  CHECK(s == sample_surface_points(body, t, 500, 21));

  // Two triangles with known areas on otherwise degenerate geometry.
  TemplateBody two = t;
  Mesh m;
  m.vertices = Points::Zero(t.num_vertices(), 3);
  m.vertices.row(1) << 1, 0, 0;
  m.vertices.row(2) << 0, 1, 0;
  m.vertices.row(3) << 3, 0, 0;
  m.vertices.row(4) << 0, 0, 1;
  two.faces.resize(2, 3);
  two.faces << 0, 1, 2, 1, 3, 4;
  const double a0 = 0.5;  // z = 0 plane
  const double a1 = 0.5 * Vec3(2, 0, 0).cross(Vec3(-1, 0, 1)).norm();  // y = 0 plane
  const int n = 20000;
  const Points q = sample_surface_points(m, two, n, 5);
  int c0 = 0;
  for (int i = 0; i < n; ++i) {
    if (q(i, 2) == 0.0) {
      ++c0;
      CHECK(q(i, 0) + q(i, 1) <= 1.0 + 1e-12);
    } else {
      CHECK(q(i, 1) == 0.0);
      CHECK(q(i, 0) + 2.0 * q(i, 2) <= 3.0 + 1e-12);
      CHECK(q(i, 0) + q(i, 2) >= 1.0 - 1e-12);
    }
  }
  const double e0 = n * a0 / (a0 + a1);
  const double e1 = n - e0;
  const double chi2 = (c0 - e0) * (c0 - e0) / e0 + ((n - c0) - e1) * ((n - c0) - e1) / e1;
  const boost::math::chi_squared dist(1);
  CHECK(boost::math::cdf(boost::math::complement(dist, chi2)) > 1e-3);
}

TEST_CASE("sequence simulation is deterministic") {
  SceneConfig sc;
  sc.grid = tiny_grid();
  sc.roi_dims = {16, 16, 12};
  sc.teacher_points = 64;
  SequenceSpec spec;
  spec.motion.action = Action::walk;
  spec.seed = 77;
  const auto a = simulate_sequence(sc, spec, default_body_model());
  const auto b = simulate_sequence(sc, spec, default_body_model());
  REQUIRE(a.window() == 4);
  for (int t = 0; t < 4; ++t) CHECK(a.frames[t].data == b.frames[t].data);
  CHECK(a.flow_gt.values[0].data == b.flow_gt.values[0].data);
  CHECK(a.teacher_points[3] == b.teacher_points[3]);
  CHECK(a.flow_gt.grid.dims == Index3{16, 16, 12});
  spec.seed = 78;
  const auto c = simulate_sequence(sc, spec, default_body_model());
  CHECK(a.frames[0].data != c.frames[0].data);
}

TEST_CASE("hidden point removal edge cases") {
  Points tet(4, 3);
  tet << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1;
  // viewpoint far along the (1,1,1) diagonal sees the three axis tips
  const auto vis = hidden_point_removal(tet, Vec3(5, 5, 5));
  for (int i : {1, 2, 3}) CHECK(std::find(vis.begin(), vis.end(), i) != vis.end());
  Points same = Points::Ones(10, 3);
  CHECK_THROWS_AS(hidden_point_removal(same, Vec3(0, 0, 5)), DegenerateGeometryError);
  // scaling about the viewpoint leaves the visible set unchanged
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  Points p(300, 3);
  for (int i = 0; i < 300; ++i) p.row(i) = Vec3(g(rng), g(rng), g(rng)).normalized().transpose();
  const Vec3 vp(0, 0, 5);
  Points scaled = p;
  for (int i = 0; i < 300; ++i) scaled.row(i) = (vp + 2.0 * (p.row(i).transpose() - vp)).transpose();
  CHECK(hidden_point_removal(p, vp) == hidden_point_removal(scaled, vp));
}

TEST_CASE("voxelization round trip stays within half a diagonal") {
  const GridSpec g = tiny_grid();
  const Mesh m = mesh_at(Vec3(6.0, 4.0, 1.0), 0.7);
  const auto occ = voxelize_occupancy(m.vertices, g);
  CHECK(occ.dropped == 0);
  const double half_diag = 0.5 * g.voxel_size.norm();
  for (int i = 0; i < m.vertices.rows(); ++i) {
    const auto v = g.voxel_of(m.vertices.row(i).transpose());
    REQUIRE(v.has_value());
    CHECK(occ.map.values.at(*v) == 1);
    CHECK((g.center_of(*v) - m.vertices.row(i).transpose()).norm() <= half_diag + 1e-12);
  }
}

TEST_CASE("voxel index bijection on the half-open grid") {
  GridSpec g;
  g.dims = {7, 5, 3};
  g.origin = Vec3(-0.3, 1.1, 0.2);
  g.voxel_size = Vec3(0.1, 0.2, 0.3);
  for (std::size_t lin = 0; lin < g.num_voxels(); ++lin) {
    const Index3 v = g.unlinear(lin);
    CHECK(g.linear(v) == lin);
    CHECK(g.voxel_of(g.center_of(v)) == v);
    // lower corner belongs to the cell itself
    const Vec3 corner = g.origin + Vec3(v[0] * 0.1, v[1] * 0.2, v[2] * 0.3);
    CHECK(g.voxel_of(corner) == v);
  }
}

TEST_CASE("pseudo tensors use max aggregation") {
  const GridSpec g = tiny_grid();
  CHECK(std::all_of(make_pseudo_tensor(Points(0, 3), {}, g).data.begin(),
                    make_pseudo_tensor(Points(0, 3), {}, g).data.end(), [](float x) { return x == 0.0f; }));
  Points one(1, 3);
  one << 1.05, 1.05, 1.05;
  const auto a = make_pseudo_tensor(one, {3.5}, g);
  CHECK(a.at(5, 5, 5) == 3.5f);
  Points two(2, 3);
  two << 1.01, 1.01, 1.01, 1.1, 1.1, 1.1;
  CHECK(make_pseudo_tensor(two, {2.0, 5.0}, g).at(5, 5, 5) == 5.0f);
}

TEST_CASE("occupancy is a strict subset of the full-mesh voxelization") {
  const GridSpec g = tiny_grid();
  for (double yaw : {0.0, 1.0, 2.5}) {
    const Mesh m = mesh_at(Vec3(5.0, 4.5, 1.0), yaw);
    const auto f = simulate_frame(m, Vec3(6.05, 0, 1.2), g, ClutterConfig::none(), 3);
    const auto all = voxelize_occupancy(m.vertices, g).map;
    int vis = 0, full = 0;
    for (std::size_t i = 0; i < all.values.size(); ++i) {
      if (f.occupancy.values.data[i]) CHECK(all.values.data[i] == 1);
      vis += f.occupancy.values.data[i];
      full += all.values.data[i];
    }
    CHECK(vis < full);
    CHECK(f.visible.size() < static_cast<std::size_t>(m.vertices.rows()));
  }
}

TEST_CASE("static meshes give zero flow; rigid flow composes") {
  const Mesh a = mesh_at(Vec3(6.0, 4.0, 1.0));
  const Mesh b = mesh_at(Vec3(6.05, 3.9, 1.0));
  const Mesh c = mesh_at(Vec3(6.1, 3.8, 1.0));
  const GridSpec roi = tiny_grid().sub_grid({20, 10, 0}, {16, 16, 12});
  const Vec3 sensor(6.05, 0, 1.2);
  const auto zero = make_scene_flow_gt(a, a, roi, sensor);
  for (const auto& ch : zero.values)
    CHECK(std::all_of(ch.data.begin(), ch.data.end(), [](float x) { return x == 0.0f; }));
  const auto f1 = make_scene_flow_gt(a, b, roi, sensor);
  const auto f2 = make_scene_flow_gt(b, c, roi, sensor);
  const auto f12 = make_scene_flow_gt(a, c, roi, sensor);
  auto constant_of = [](const FlowVolume& f) {
    Vec3 out = Vec3::Zero();
    for (std::size_t i = 0; i < f.values[0].size(); ++i) {
      const Vec3 v(f.values[0].data[i], f.values[1].data[i], f.values[2].data[i]);
      if (v.norm() > 0.0) out = v;
    }
    return out;
  };
  const Vec3 step = constant_of(f1) + constant_of(f2);
  int occupied = 0;
  for (std::size_t i = 0; i < f12.values[0].size(); ++i) {
    const Vec3 v(f12.values[0].data[i], f12.values[1].data[i], f12.values[2].data[i]);
    if (v.norm() == 0.0) continue;
    ++occupied;
    CHECK((v - step).norm() < 1e-6);
  }
  CHECK(occupied > 10);
}

TEST_CASE("arm-raise flow is concentrated on the arms") {
  const TemplateBody& t = select_template(1.0);
  BodyParams p;
  p.tau = Vec3(6.0, 4.0, 1.0);
  p.theta.row(16) = Vec3(0, 1.2, 0).transpose();
  p.theta.row(17) = Vec3(0, -1.2, 0).transpose();
  BodyParams q = p;
  q.theta.row(16) = Vec3(0, 0.95, 0).transpose();
  q.theta.row(17) = Vec3(0, -0.95, 0).transpose();
  const Mesh a = forward(t, p);
  const Mesh b = forward(t, q);
  // oracle: arm vertices are those whose dominant weight is on an arm joint
  std::vector<int> arm_joints = {16, 17, 18, 19, 20, 21};
  const GridSpec roi = tiny_grid().sub_grid({20, 10, 0}, {16, 16, 12});
  const auto vis = hidden_point_removal(b.vertices, Vec3(6.05, 0, 1.2));
  const auto flow = make_scene_flow_gt(a, b, roi, vis);
  double max_arm = 0.0, max_torso = 0.0;
  for (int idx : vis) {
    Eigen::Index jmax;
    t.skin_weights.row(idx).maxCoeff(&jmax);
    const auto v = roi.voxel_of(b.vertices.row(idx).transpose());
    if (!v) continue;
    const std::size_t lin = roi.linear(*v);
    const double mag = Vec3(flow.values[0].data[lin], flow.values[1].data[lin], flow.values[2].data[lin]).norm();
    const bool arm = std::find(arm_joints.begin(), arm_joints.end(), jmax) != arm_joints.end();
    const bool torso = jmax == 0 || jmax == 3 || jmax == 6 || jmax == 9;
    if (arm) max_arm = std::max(max_arm, mag);
    if (torso) max_torso = std::max(max_torso, mag);
  }
  CHECK(max_arm > 0.05);
  CHECK(max_torso < 0.1 * max_arm);
}
