#include "test_support.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <tuple>

#include "radarmesh/errors.hpp"
#include "radarmesh/mmr.hpp"

using namespace radarmesh;
using torch::indexing::Slice;

namespace {

GridSpec roi_parent() {
  GridSpec g;
  g.dims = {30, 30, 20};
  g.voxel_size = Vec3(0.1, 0.1, 0.1);
  g.origin = Vec3(-1.5, 0.0, -0.5);
  return g;
}

ReflectionVolume random_reflection(const Index3& d, std::uint64_t seed, int levels = 0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  ReflectionVolume r;
  r.grid = roi_parent();
  r.roi_origin_voxel = {3, 4, 2};
  r.probs = FloatVolume(d);
  r.source_intensity = FloatVolume(d);
  for (std::size_t i = 0; i < r.probs.size(); ++i) {
    float p = u(rng);
    if (levels > 0) p = std::floor(p * levels) / levels;
    r.probs.data[i] = p;
    r.source_intensity.data[i] = levels > 0 ? std::floor(u(rng) * levels) / levels : u(rng);
  }
  return r;
}

// Small architecture for fast tests.
MmrConfig micro() {
  MmrConfig c;
  c.k = 48;
  c.d_s = 16;
  c.window = 4;
  c.roi_dims = {8, 8, 8};
  c.sa1_points = 16;
  c.sa1_samples = 6;
  c.sa1_radius = 0.35;
  c.sa1_mlp = {8, 12};
  c.sa2_points = 6;
  c.sa2_samples = 5;
  c.sa2_radius = 0.7;
  c.sa2_mlp = {12, 16};
  c.global_mlp = {16, 24};
  c.motion_base = 2;
  c.heads = 4;
  c.layers = 2;
  c.ffn = 24;
  c.head_hidden = 20;
  return c;
}

Points random_cloud(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 0.4);
  Points p(n, 3);
  for (int i = 0; i < n; ++i) p.row(i) << nd(rng), nd(rng), nd(rng);
  return p;
}

PointSet5 random_pointset(int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PointSet5 ps;
  ps.points.resize(k, 5);
  const Points xyz = random_cloud(k, seed + 1);
  for (int i = 0; i < k; ++i) ps.points.row(i) << xyz(i, 0), xyz(i, 1), xyz(i, 2), u(rng), u(rng);
  return ps;
}

torch::Tensor pointset_tensor(const PointSet5& ps, torch::Dtype dt = torch::kFloat32) {
  auto t = torch::empty({ps.size(), 5}, torch::kFloat64);
  std::copy(ps.points.data(), ps.points.data() + ps.points.size(), t.data_ptr<double>());
  return t.to(dt);
}

MmrBatch random_batch(const MmrConfig& c, int b, std::uint64_t seed, torch::Dtype dt) {
  std::vector<torch::Tensor> pts;
  std::vector<GroupingPlan> plans;
  for (int i = 0; i < b * c.window; ++i) {
    PointSet5 ps = random_pointset(c.k, seed + 17 * i);
    canonicalize(ps);
    plans.push_back(plan_grouping(ps.xyz(), c));
    pts.push_back(pointset_tensor(ps, dt));
  }
  torch::manual_seed(seed);
  MmrBatch batch;
  batch.points = torch::stack(pts).view({b, c.window, c.k, 5});
  batch.plan = PlanTensors::stack(plans, c);
  batch.centers = torch::randn({b, c.window, 3}, dt);
  batch.diff = torch::randn({b, c.window - 1, c.roi_dims[0], c.roi_dims[1], c.roi_dims[2]}, dt) * 0.3;
  return batch;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

}  // namespace

TEST_CASE("top-K: exact support and tie determinism") {
  ReflectionVolume r = random_reflection({6, 5, 4}, 1);
  std::fill(r.probs.data.begin(), r.probs.data.end(), 0.0f);
  const std::vector<Index3> hot = {{0, 0, 0}, {5, 4, 3}, {2, 3, 1}, {4, 0, 2}};
  for (const auto& v : hot) r.probs.at(v) = 1.0f;
  const PointSet5 ps = select_topk_points(r, 4);
  CHECK(ps.size() == 4);
  const GridSpec g = r.roi_grid();
  for (int i = 0; i < 4; ++i) {
    CHECK(ps.points(i, 4) == 1.0);
    bool found = false;
    for (const auto& v : hot) found = found || (g.center_of(v) - ps.points.row(i).leftCols<3>().transpose()).norm() < 1e-12;
    CHECK(found);
  }
  // world-frame centers include the RoI origin
  CHECK(g.origin[0] == doctest::Approx(-1.5 + 0.3));

  ReflectionVolume flat = random_reflection({6, 5, 4}, 2);
  std::fill(flat.probs.data.begin(), flat.probs.data.end(), 0.5f);
  std::fill(flat.source_intensity.data.begin(), flat.source_intensity.data.end(), 0.25f);
  const PointSet5 a = select_topk_points(flat, 10);
  const PointSet5 b = select_topk_points(flat, 10);
  CHECK(a.points == b.points);
  // pure linear-index order under full ties
  for (int i = 0; i < 10; ++i) {
    const Vec3 c = g.center_of(g.unlinear(static_cast<std::size_t>(i)));
    CHECK((c - a.points.row(i).leftCols<3>().transpose()).norm() < 1e-12);
  }
  CHECK_THROWS_AS(select_topk_points(flat, 121), ContractViolation);
}

TEST_CASE("top-K matches a full-sort oracle") {
  for (std::uint64_t seed : {3u, 4u, 5u}) {
    // quantized values force many ties
    const ReflectionVolume r = random_reflection({7, 6, 5}, seed, seed == 5 ? 4 : 0);
    const int k = 37;
    std::vector<std::tuple<float, float, std::size_t>> all;
    for (std::size_t i = 0; i < r.probs.size(); ++i) {
      all.emplace_back(-r.probs.data[i], -r.source_intensity.data[i], i);
    }
    std::sort(all.begin(), all.end());
    const PointSet5 ps = select_topk_points(r, k);
    const GridSpec g = r.roi_grid();
    for (int i = 0; i < k; ++i) {
      const std::size_t lin = std::get<2>(all[i]);
      CHECK((g.center_of(g.unlinear(lin)) - ps.points.row(i).leftCols<3>().transpose()).norm() < 1e-12);
      CHECK(ps.points(i, 4) == doctest::Approx(r.probs.data[lin]));
      CHECK(ps.points(i, 3) == doctest::Approx(r.source_intensity.data[lin]));
    }
  }
}

TEST_CASE("CFAR points are cycled and fall back to bright voxels") {
  GridSpec g = roi_parent();
  FloatVolume frame(g.dims);
  frame.at(1, 2, 3) = 0.9f;
  frame.at(4, 4, 4) = 0.5f;
  frame.at(7, 1, 1) = 0.7f;
  CfarDetections d;
  d.points.resize(2, 3);
  d.points.row(0) = g.center_of({4, 4, 4}).transpose();
  d.points.row(1) = g.center_of({1, 2, 3}).transpose();
  d.intensities = {0.5, 0.9};
  d.voxels = {{4, 4, 4}, {1, 2, 3}};
  const PointSet5 ps = select_cfar_points(d, frame, g, 5);
  CHECK(ps.size() == 5);
  const std::vector<double> want = {0.9, 0.5, 0.9, 0.5, 0.9};
  for (int i = 0; i < 5; ++i) {
    CHECK(ps.points(i, 3) == doctest::Approx(want[i]));
    CHECK(ps.points(i, 4) == 1.0);
  }
  const PointSet5 fb = select_cfar_points(CfarDetections{}, frame, g, 3);
  CHECK(fb.points(0, 3) == doctest::Approx(0.9));
  CHECK(fb.points(1, 3) == doctest::Approx(0.7));
  CHECK(fb.points(2, 3) == doctest::Approx(0.5));
}

TEST_CASE("centroid is likelihood weighted") {
  PointSet5 ps;
  ps.points.resize(2, 5);
  ps.points.row(0) << 0, 0, 0, 1, 0.25;
  ps.points.row(1) << 4, 0, 0, 1, 0.75;
  CHECK(point_centroid(ps)[0] == doctest::Approx(3.0));
  ps.points(0, 4) = 0;
  ps.points(1, 4) = 0;
  CHECK(point_centroid(ps)[0] == doctest::Approx(2.0));
}

TEST_CASE("farthest point sampling and ball query") {
  Points line(5, 3);
  for (int i = 0; i < 5; ++i) line.row(i) << i, 0, 0;
  const auto f = farthest_point_sampling(line, 3);
  CHECK(f.size() == 3);
  CHECK(farthest_point_sampling(line, 3) == f);
  // second pick is an end point of the segment
  CHECK((f[1] == 0 || f[1] == 4));
  std::vector<int> s = f;
  std::sort(s.begin(), s.end());
  CHECK(std::unique(s.begin(), s.end()) == s.end());
  CHECK_THROWS_AS(farthest_point_sampling(line, 6), ContractViolation);

  // greedy FPS oracle: every pick maximizes distance to the chosen set
  const Points cloud = random_cloud(60, 9);
  const auto picks = farthest_point_sampling(cloud, 12);
  for (std::size_t s = 1; s < picks.size(); ++s) {
    auto dist_to_set = [&](int i) {
      double d = 1e300;
      for (std::size_t t = 0; t < s; ++t) d = std::min(d, (cloud.row(i) - cloud.row(picks[t])).squaredNorm());
      return d;
    };
    double best = 0;
    for (int i = 0; i < 60; ++i) best = std::max(best, dist_to_set(i));
    CHECK(dist_to_set(picks[s]) == doctest::Approx(best));
  }

  Points centers(2, 3);
  centers.row(0) << 1.1, 0, 0;
  centers.row(1) << 10, 0, 0;
  const auto b = ball_query(line, centers, 1.0, 4);
  REQUIRE(b.size() == 8);
  CHECK(std::vector<int>(b.begin(), b.begin() + 4) == std::vector<int>{1, 2, 1, 1});
  // no neighbor in range: nearest point, repeated
  CHECK(std::vector<int>(b.begin() + 4, b.end()) == std::vector<int>{4, 4, 4, 4});
}

TEST_CASE("shape encoder: width contract and canonical permutation invariance") {
  torch::manual_seed(0);
  const MmrConfig c = micro();
  PointNetEncoder enc(5, c);
  enc->eval();
  PointSet5 ps = random_pointset(c.k, 21);
  canonicalize(ps);
  PointSet5 shuffled = ps;
  std::mt19937_64 rng(4);
  std::vector<int> perm(c.k);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (int i = 0; i < c.k; ++i) shuffled.points.row(i) = ps.points.row(perm[i]);
  CHECK(!(shuffled.points == ps.points));
  canonicalize(shuffled);
  auto token = [&](const PointSet5& p) {
    const auto plan = PlanTensors::stack({plan_grouping(p.xyz(), c)}, c);
    return enc->forward(pointset_tensor(p).unsqueeze(0), plan);
  };
  const auto t0 = token(ps);
  CHECK(t0.sizes() == torch::IntArrayRef({1, c.d_s}));
  CHECK(torch::equal(t0, token(shuffled)));

  for (int k : {24, 48, 96}) {
    MmrConfig ck = c;
    ck.k = k;
    PointSet5 p = random_pointset(k, 7);
    const auto plan = PlanTensors::stack({plan_grouping(p.xyz(), ck)}, ck);
    CHECK(enc->forward(pointset_tensor(p).unsqueeze(0), plan).size(1) == c.d_s);
  }
  CHECK_THROWS_AS(enc->forward(torch::zeros({1, c.k, 3}), PlanTensors::stack({plan_grouping(ps.xyz(), c)}, c)),
                  ContractViolation);
}

TEST_CASE("difference volume") {
  std::vector<ReflectionVolume> same(4, random_reflection({4, 3, 5}, 11));
  const auto z = difference_volume(same);
  REQUIRE(z.channels.size() == 3);
  for (const auto& ch : z.channels) CHECK(*std::max_element(ch.data.begin(), ch.data.end()) == 0.0f);

  std::vector<ReflectionVolume> v;
  for (int i = 0; i < 4; ++i) v.push_back(random_reflection({4, 3, 5}, 20 + i));
  v[3] = v[0];
  for (auto& x : v[3].probs.data) x += 0.3f;
  const auto d = difference_volume(v);
  for (float x : d.channels[0].data) CHECK(x == doctest::Approx(0.3f));
  for (int i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < v[0].probs.size(); ++j) {
      CHECK(d.channels[i].data[j] == v[3].probs.data[j] - v[i].probs.data[j]);
    }
  }

  auto t = torch::stack({volume_to_tensor(v[0].probs), volume_to_tensor(v[1].probs), volume_to_tensor(v[2].probs),
                         volume_to_tensor(v[3].probs)})
               .unsqueeze(0);
  const auto dt = difference_volume(t);
  CHECK(dt.sizes() == torch::IntArrayRef({1, 3, 4, 3, 5}));
  for (int i = 0; i < 3; ++i) CHECK(torch::equal(dt[0][i], volume_to_tensor(d.channels[i])));

  auto bad = v;
  bad[1].roi_origin_voxel[2] += 1;
  CHECK_THROWS_AS(difference_volume(bad), ContractViolation);
  CHECK_THROWS_AS(difference_volume(std::vector<ReflectionVolume>{v[0]}), ContractViolation);
}

TEST_CASE("motion net: flow only in training mode") {
  torch::manual_seed(1);
  const MmrConfig big = MmrConfig::full();
  MotionNet net(big.window - 1, 4, big.d_s);
  const auto d = torch::randn({1, 3, 32, 32, 24});
  net->train();
  const auto tr = net->forward(d);
  REQUIRE(tr.flow.has_value());
  CHECK(tr.flow->sizes() == torch::IntArrayRef({1, 3, 32, 32, 24}));
  CHECK(tr.token.sizes() == torch::IntArrayRef({1, big.d_s}));
  net->eval();
  const auto ev = net->forward(d);
  CHECK(!ev.flow.has_value());
  const auto z1 = net->forward(torch::zeros({1, 3, 32, 32, 24}));
  const auto z2 = net->forward(torch::zeros({1, 3, 32, 32, 24}));
  CHECK(torch::equal(z1.token, z2.token));
  CHECK_THROWS_AS(net->forward(torch::zeros({1, 2, 32, 32, 24})), ContractViolation);
}

TEST_CASE("fusion: softmax rows, shapes and position equivariance") {
  torch::manual_seed(2);
  Fusion f(16, 2, 4, 32, 5);
  f->eval();
  const auto z = torch::randn({3, 16});
  const auto s = torch::randn({3, 4, 16});
  const auto out = f->forward(z, s);
  CHECK(out.sizes() == torch::IntArrayRef({3, 16}));
  REQUIRE(f->last_weights.size() == 2);
  for (const auto& w : f->last_weights) {
    CHECK(w.sizes() == torch::IntArrayRef({3, 4, 5, 5}));
    CHECK((w.sum(-1) - 1).abs().max().item<double>() < 1e-6);
  }
  const auto perm = torch::tensor({0, 3, 1, 4, 2}, torch::kInt64);
  const auto s_perm = s.index_select(1, torch::tensor({2, 0, 3, 1}, torch::kInt64));
  const auto pos_perm = f->pos.index_select(0, perm);
  const auto out_perm = f->forward_with(z, s_perm, pos_perm);
  CHECK(torch::allclose(out, out_perm, 1e-5, 1e-6));
  CHECK(!torch::allclose(out, f->forward(z, s_perm), 1e-5, 1e-6));
  CHECK_THROWS_AS(f->forward(torch::randn({3, 8}), s), ContractViolation);
  CHECK_THROWS_AS(f->forward(z, torch::randn({3, 3, 16})), ContractViolation);
}

TEST_CASE("regression head: arity, sigmoid range and determinism") {
  torch::manual_seed(3);
  RegressionHead h(16, 20);
  const auto x = torch::randn({1000, 16}) * 50;
  const auto raw = h->forward(x);
  CHECK(raw.size(1) == 83);
  const auto dec = decode_head(raw, torch::zeros({1000, 3}));
  CHECK(dec.params.size(1) == 82);
  CHECK(dec.g.min().item<double>() >= 0.0);
  CHECK(dec.g.max().item<double>() <= 1.0);
  CHECK(torch::equal(h->forward(x), raw));
  const auto c = torch::randn({1000, 3});
  const auto shifted = decode_head(raw, c);
  CHECK(torch::allclose(shifted.params.index({Slice(), Slice(13, 16)}) - dec.params.index({Slice(), Slice(13, 16)}), c));
}

TEST_CASE("teacher and student tokens share a width") {
  torch::manual_seed(4);
  const MmrConfig c = micro();
  Teacher t(c);
  MmrModel m(c);
  t->eval();
  m->eval();
  PointSet5 ps = random_pointset(c.k, 31);
  const auto plan = PlanTensors::stack({plan_grouping(ps.xyz(), c)}, c);
  const auto pts = pointset_tensor(ps).index({Slice(), Slice(0, 3)}).unsqueeze(0);
  const auto a = t->forward(pts, plan, torch::zeros({1, 3}));
  const auto b = t->forward(pts, plan, torch::zeros({1, 3}));
  CHECK(torch::equal(a.token, b.token));
  CHECK(torch::equal(a.params, b.params));
  const auto batch = random_batch(c, 1, 5, torch::kFloat32);
  const auto out = m->forward(batch);
  CHECK(out.shape_tokens.size(2) == a.token.size(1));
  CHECK(out.params.sizes() == torch::IntArrayRef({1, 82}));
  CHECK(!out.flow.has_value());
}

TEST_CASE("distillation loss") {
  const auto s = torch::randn({2, 3, 8});
  CHECK(shape_distill_loss(s, s.clone()).item<double>() == 0.0);
  auto a = torch::zeros({1, 2, 4}, torch::kFloat64);
  auto b = torch::zeros({1, 2, 4}, torch::kFloat64);
  a[0][0][0] = 1.0;
  a[0][1][2] = 3.0;
  CHECK(shape_distill_loss(a, b).item<double>() == doctest::Approx(5.0));
  auto st = torch::randn({2, 4, 8}, torch::requires_grad());
  auto te = torch::randn({2, 4, 8}, torch::requires_grad());
  shape_distill_loss(st, te).backward();
  CHECK(st.grad().defined());
  CHECK((!te.grad().defined() || te.grad().abs().max().item<double>() == 0.0));
}

TEST_CASE("motion loss") {
  const auto f = torch::randn({2, 3, 4, 4, 4}, torch::kFloat64);
  CHECK(motion_loss(f, f).item<double>() == 0.0);
  CHECK(motion_loss(f + 0.1, f).item<double>() == doctest::Approx(0.01));
  const auto zero = torch::zeros_like(f);
  CHECK(motion_loss(f, zero).item<double>() == doctest::Approx(f.pow(2).mean().item<double>()));
  CHECK_THROWS_AS(motion_loss(f, torch::zeros({2, 3, 4, 4, 5}, torch::kFloat64)), ContractViolation);
  // masked variant averages over voxels with nonzero target only
  auto gt = torch::zeros({1, 3, 2, 2, 2}, torch::kFloat64);
  gt[0][0][0][0][0] = 1.0;
  const auto pred = torch::ones_like(gt);
  CHECK(motion_loss(pred, gt, true).item<double>() == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("SMPL loss: closed forms and finite differences") {
  const BodyLayer body(default_body_model(), torch::kFloat64);
  torch::manual_seed(5);
  const auto gt = torch::randn({2, 82}, torch::kFloat64) * 0.2;
  const auto g1 = torch::tensor({1.0, 0.0}, torch::kFloat64);
  const auto exact = smpl_loss(gt.clone(), g1.clone(), gt, g1, body);
  CHECK(exact.total.item<double>() <= 1e-6);

  auto off = gt.clone();
  off.index_put_({Slice(), Slice(13, 16)}, off.index({Slice(), Slice(13, 16)}) + torch::tensor({3.0, 4.0, 0.0}, torch::kFloat64));
  const auto l = smpl_loss(off, g1, gt, g1, body);
  CHECK(l.tau.item<double>() == doctest::Approx(25.0 / 3.0));
  CHECK(l.joints.item<double>() == doctest::Approx(25.0));
  CHECK(l.theta.item<double>() == 0.0);

  auto pred = (gt + torch::randn({2, 82}, torch::kFloat64) * 0.3).requires_grad_(true);
  auto pg = torch::tensor({0.3, 0.6}, torch::kFloat64).requires_grad_(true);
  smpl_loss(pred, pg, gt, g1, body).total.backward();
  const auto grad = pred.grad().clone();
  const double eps = 1e-6;
  torch::NoGradGuard ng;
  int bad = 0;
  for (int b = 0; b < 2; ++b) {
    for (int i = 0; i < 82; ++i) {
      auto p = pred.detach().clone();
      p[b][i] += eps;
      const double up = smpl_loss(p, pg.detach(), gt, g1, body).total.item<double>();
      p[b][i] -= 2 * eps;
      const double dn = smpl_loss(p, pg.detach(), gt, g1, body).total.item<double>();
      const double num = (up - dn) / (2 * eps);
      if (rel_err(grad[b][i].item<double>(), num) > 1e-4) ++bad;
    }
    auto q = pg.detach().clone();
    q[b] += eps;
    const double up = smpl_loss(pred.detach(), q, gt, g1, body).total.item<double>();
    q[b] -= 2 * eps;
    const double dn = smpl_loss(pred.detach(), q, gt, g1, body).total.item<double>();
    CHECK(rel_err(pg.grad()[b].item<double>(), (up - dn) / (2 * eps)) <= 1e-4);
  }
  CHECK(bad == 0);
}

TEST_CASE("stage-2 total loss") {
  const auto one = torch::tensor(1.0, torch::kFloat64);
  CHECK(mmr_loss(one, torch::tensor(0.1, torch::kFloat64), torch::tensor(0.001, torch::kFloat64)).item<double>() ==
        doctest::Approx(2.5));
  const auto z = torch::tensor(0.0, torch::kFloat64);
  CHECK(mmr_loss(z, z, z).item<double>() == 0.0);
  MmrLossWeights w;
  w.motion_off = true;
  CHECK(mmr_loss(one, torch::tensor(0.1, torch::kFloat64), std::nullopt, w).item<double>() == doctest::Approx(2.0));
  w.distill_off = true;
  CHECK(mmr_loss(one, std::nullopt, std::nullopt, w).item<double>() == 1.0);
  CHECK_THROWS_AS(mmr_loss(one, std::nullopt, z), ContractViolation);
}

TEST_CASE("end-to-end gradients match finite differences") {
  torch::manual_seed(6);
  const MmrConfig c = micro();
  MmrModel m(c);
  m->to(torch::kFloat64);
  m->train();
  const BodyLayer body(default_body_model(), torch::kFloat64);
  const auto batch = random_batch(c, 2, 40, torch::kFloat64);
  const auto gt = torch::randn({2, 82}, torch::kFloat64) * 0.2;
  const auto gg = torch::tensor({1.0, 0.0}, torch::kFloat64);
  const auto teacher = torch::randn({2, c.window, c.d_s}, torch::kFloat64);
  const auto flow_gt = torch::randn({2, 3, 8, 8, 8}, torch::kFloat64) * 0.1;
  auto loss_of = [&]() {
    const auto o = m->forward(batch);
    return mmr_loss(smpl_loss(o.params, o.g, gt, gg, body).total, shape_distill_loss(o.shape_tokens, teacher),
                    motion_loss(*o.flow, flow_gt));
  };
  m->zero_grad();
  loss_of().backward();

  std::vector<std::pair<std::string, torch::Tensor>> params;
  for (const auto& p : m->named_parameters()) params.emplace_back(p.key(), p.value());
  std::mt19937_64 rng(7);
  int checked = 0;
  int bad = 0;
  // every branch gets sampled: shape, motion, fusion, head
  for (const std::string prefix : {"shape.", "motion.", "fusion.", "head."}) {
    std::vector<std::size_t> cand;
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].first.rfind(prefix, 0) == 0) cand.push_back(i);
    }
    REQUIRE(!cand.empty());
    for (int r = 0; r < 3; ++r) {
      const auto& [name, t] = params[cand[rng() % cand.size()]];
      const auto n = t.numel();
      const auto j = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(n));
      const double analytic = t.grad().view(-1)[j].item<double>();
      const double eps = 1e-6;
      double up = 0;
      double dn = 0;
      {
        torch::NoGradGuard ng;
        auto flat = t.view(-1);
        flat[j] += eps;
        up = loss_of().item<double>();
        flat[j] -= 2 * eps;
        dn = loss_of().item<double>();
        flat[j] += eps;
      }
      const double num = (up - dn) / (2 * eps);
      if (std::abs(analytic - num) > 1e-4 * std::max(std::abs(num), 1e-3)) {
        ++bad;
        MESSAGE(name << " analytic " << analytic << " numeric " << num);
      }
      ++checked;
    }
  }
  CHECK(checked == 12);
  CHECK(bad == 0);
}

TEST_CASE("motion off: no flow and no motion-net gradient") {
  torch::manual_seed(8);
  const MmrConfig c = micro();
  MmrModel m(c);
  m->train();
  const BodyLayer body(default_body_model(), torch::kFloat32);
  const auto batch = random_batch(c, 2, 50, torch::kFloat32);
  const auto o = m->forward(batch, false);
  CHECK(!o.flow.has_value());
  MmrLossWeights w;
  w.motion_off = true;
  const auto gt = torch::zeros({2, 82});
  mmr_loss(smpl_loss(o.params, o.g, gt, torch::ones({2}), body).total,
           shape_distill_loss(o.shape_tokens, torch::zeros_like(o.shape_tokens)), std::nullopt, w)
      .backward();
  for (const auto& p : m->motion->parameters()) {
    CHECK((!p.grad().defined() || p.grad().abs().max().item<double>() == 0.0));
  }
  CHECK(m->motion_const.grad().defined());
}

TEST_CASE("architecture config round trip") {
  const MmrConfig c = MmrConfig::tiny();
  CHECK(MmrConfig::from_json(c.to_json()).to_json() == c.to_json());
  auto j = c.to_json();
  j["sa1_points"] = 10000;
  CHECK_THROWS_AS(MmrConfig::from_json(j), ConfigError);
}
