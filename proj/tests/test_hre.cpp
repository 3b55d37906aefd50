#include "test_support.hpp"

#include <cmath>
#include <random>

#include "radarmesh/errors.hpp"
#include "radarmesh/hre.hpp"

using namespace radarmesh;

namespace {

GridSpec small_grid() {
  GridSpec g;
  g.dims = {20, 18, 16};
  g.voxel_size = Vec3(0.2, 0.2, 0.2);
  return g;
}

FloatVolume random_volume(const Index3& d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  FloatVolume v(d);
  for (auto& x : v.data) x = u(rng);
  return v;
}

}  // namespace

TEST_CASE("views are max projections") {
  FloatVolume zero({5, 6, 7});
  const auto z = project_views(zero);
  CHECK(z.xy.maxCoeff() == 0.0f);
  CHECK(z.xy.rows() == 5);
  CHECK(z.xy.cols() == 6);
  CHECK(z.yz.rows() == 6);
  CHECK(z.yz.cols() == 7);
  CHECK(z.xz.rows() == 5);
  CHECK(z.xz.cols() == 7);
  FloatVolume imp({5, 6, 7});
  imp.at(1, 2, 3) = 7.0f;
  const auto v = project_views(imp);
  CHECK(v.xy(1, 2) == 7.0f);
  CHECK(v.yz(2, 3) == 7.0f);
  CHECK(v.xz(1, 3) == 7.0f);
  CHECK(v.xy.sum() == 7.0f);

  const FloatVolume r = random_volume({9, 8, 7}, 4);
  const auto t = project_views(volume_to_tensor(r).unsqueeze(0));
  for (int i = 0; i < 9; ++i)
    for (int j = 0; j < 8; ++j) {
      float m = 0.0f;
      for (int k = 0; k < 7; ++k) m = std::max(m, r.at(i, j, k));
      CHECK(t.xy[0][0][i][j].item<float>() == m);
    }
  for (int j = 0; j < 8; ++j)
    for (int k = 0; k < 7; ++k) {
      float m = 0.0f;
      for (int i = 0; i < 9; ++i) m = std::max(m, r.at(i, j, k));
      CHECK(t.yz[0][0][j][k].item<float>() == m);
    }
  for (int i = 0; i < 9; ++i)
    for (int k = 0; k < 7; ++k) {
      float m = 0.0f;
      for (int j = 0; j < 8; ++j) m = std::max(m, r.at(i, j, k));
      CHECK(t.xz[0][0][i][k].item<float>() == m);
    }
}

TEST_CASE("shared-axis averaging and clamping") {
  const Vec3 a = combine_view_coords({10, 20}, {20, 5}, {10, 5});
  CHECK(a == Vec3(10, 20, 5));
  const Vec3 b = combine_view_coords({10, 20}, {20, 5}, {14, 5});
  CHECK(b.x() == 12.0);
  const Vec3 c = clamp_voxel_coords(Vec3(-3, 500, 4.5), {61, 56, 16});
  CHECK(c == Vec3(0, 55, 4.5));
  const auto t = combine_view_coords(torch::tensor({{10.0, 20.0}}), torch::tensor({{20.0, 5.0}}),
                                     torch::tensor({{14.0, 5.0}}));
  CHECK(t[0][0].item<double>() == 12.0);
  CHECK(t[0][1].item<double>() == 20.0);
  CHECK(t[0][2].item<double>() == 5.0);
}

TEST_CASE("coarse localization clamps to the grid and rejects bad shapes") {
  HreConfig cfg = HreConfig::tiny();
  cfg.grid_dims = {20, 18, 16};
  cfg.roi_dims = {8, 8, 8};
  HreModel m(cfg);
  {
    torch::NoGradGuard ng;
    m->loc_xy->head->bias.fill_(1000.0);
  }
  const GridSpec g = small_grid();
  const auto c = coarse_localize(random_volume(g.dims, 1), g, m);
  const auto v = g.to_voxel_coords(c.p_hat);
  CHECK(v.x() == doctest::Approx(19.0));
  CHECK(v.y() == doctest::Approx(17.0));
  GridSpec wrong = g;
  wrong.dims = {20, 18, 12};
  CHECK_THROWS_AS(coarse_localize(FloatVolume(wrong.dims), wrong, m), ContractViolation);
}

TEST_CASE("RoI cropping") {
  GridSpec g;
  g.dims = {61, 56, 31};
  g.voxel_size = Vec3(0.1, 0.1, 0.1);
  FloatVolume f(g.dims);
  const Index3 imp{40, 30, 12};
  f.at(imp) = 9.0f;
  const Index3 roi{32, 32, 24};
  const auto mid = crop_roi(f, g, g.center_of({30, 28, 15}), roi);
  CHECK(mid.roi_origin_voxel == Index3{14, 12, 3});
  CHECK(!mid.shifted);
  CHECK(mid.values.at(imp[0] - 14, imp[1] - 12, imp[2] - 3) == 9.0f);
  const auto corner = crop_roi(f, g, g.center_of({0, 0, 0}), roi);
  CHECK(corner.roi_origin_voxel == Index3{0, 0, 0});
  CHECK(corner.shifted);
  const auto far = crop_roi(f, g, g.center_of({60, 55, 30}), roi);
  CHECK(far.roi_origin_voxel == Index3{29, 24, 7});
  // every RoI cell maps back to exactly one parent voxel
  std::vector<int> hits(g.num_voxels(), 0);
  const GridSpec rg = mid.roi_grid();
  for (std::size_t lin = 0; lin < rg.num_voxels(); ++lin) {
    const auto pv = g.voxel_of(rg.center_of(rg.unlinear(lin)));
    REQUIRE(pv.has_value());
    const Index3 local = rg.unlinear(lin);
    CHECK(*pv == Index3{local[0] + 14, local[1] + 12, local[2] + 3});
    hits[g.linear(*pv)] += 1;
  }
  CHECK(std::count(hits.begin(), hits.end(), 1) == 32 * 32 * 24);
  CHECK(std::count_if(hits.begin(), hits.end(), [](int h) { return h > 1; }) == 0);
}

TEST_CASE("segmenter output range and init sanity") {
  torch::manual_seed(0);
  HreModel m(HreConfig::tiny());
  GridSpec g;
  g.dims = {61, 56, 16};
  g.voxel_size = Vec3(0.2, 0.2, 0.2);
  const auto a = crop_roi_at(random_volume(g.dims, 1), g, {10, 10, 2}, {16, 16, 12});
  const auto b = crop_roi_at(random_volume(g.dims, 2), g, {10, 10, 2}, {16, 16, 12});
  const auto ra = segment_voxels(a, m);
  const auto rb = segment_voxels(b, m);
  CHECK(ra.probs.dims == Index3{16, 16, 12});
  CHECK(std::all_of(ra.probs.data.begin(), ra.probs.data.end(), [](float p) { return p >= 0.0f && p <= 1.0f; }));
  CHECK(ra.probs.data != rb.probs.data);
  CHECK(count_parameters(*m->seg) <= 500000);
  CHECK(count_parameters(*HreModel(HreConfig::full())->seg) <= 500000);
}

TEST_CASE("localization loss") {
  CHECK(loc_loss(torch::tensor({1.0, 2.0, 3.0}), torch::tensor({1.0, 2.0, 3.0})).item<double>() == 0.0);
  CHECK(loc_loss(torch::tensor({3.0, 4.0, 0.0}), torch::zeros({3}, torch::kFloat64)).item<double>() ==
        doctest::Approx(25.0));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  const double a[3] = {g(rng), g(rng), g(rng)};
  const double b[3] = {g(rng), g(rng), g(rng)};
  double want = 0.0;
  for (int i = 0; i < 3; ++i) want += (a[i] - b[i]) * (a[i] - b[i]);
  const auto f64 = torch::kFloat64;
  const auto got = loc_loss(torch::tensor({a[0], a[1], a[2]}, f64), torch::tensor({b[0], b[1], b[2]}, f64)).item<double>();
  CHECK(got == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("segmentation loss closed forms") {
  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  auto gt = torch::zeros({1, 1, 4, 4, 4}, opts);
  gt[0][0][1][1][1] = 1;
  gt[0][0][2][2][2] = 1;
  gt[0][0][3][0][1] = 1;
  const auto perfect = seg_loss(gt.clone(), gt);
  CHECK(perfect.bce.item<double>() <= 1e-5);
  CHECK(perfect.dice.item<double>() <= 1e-5);

  const double n = 64, m = 3;
  const auto half = seg_loss(torch::full({1, 1, 4, 4, 4}, 0.5, opts), gt);
  CHECK(half.bce.item<double>() == doctest::Approx((50 * m * std::log(2.0) + (n - m) * std::log(2.0)) / n).epsilon(1e-9));
  const double dice_half = 1.0 - (2 * 0.5 * m + 1e-6) / (0.5 * n + m + 1e-6);
  CHECK(half.dice.item<double>() == doctest::Approx(dice_half).epsilon(1e-9));
  CHECK(half.total.item<double>() == doctest::Approx(half.bce.item<double>() + dice_half).epsilon(1e-12));

  const auto empty = seg_loss(torch::zeros({1, 1, 4, 4, 4}, opts), torch::zeros({1, 1, 4, 4, 4}, opts));
  CHECK(empty.dice.item<double>() == doctest::Approx(0.0));

  auto r = torch::rand({2, 1, 4, 4, 4}, opts) * 0.98 + 0.01;
  auto g = (torch::rand({2, 1, 4, 4, 4}, opts) > 0.7).to(torch::kFloat64);
  const auto plain = seg_loss(r, g, 1.0, false);
  CHECK(plain.total.item<double>() ==
        doctest::Approx(torch::binary_cross_entropy(r, g).item<double>()).epsilon(1e-9));
  CHECK_THROWS_AS(seg_loss(r, g.slice(0, 0, 1)), ContractViolation);
}

TEST_CASE("stage-1 total loss") {
  const auto a = hre_loss(torch::tensor(25.0, torch::kFloat64), torch::tensor(2.0, torch::kFloat64));
  CHECK(a.item<double>() == doctest::Approx(25.02).epsilon(1e-12));
  CHECK(hre_loss(torch::tensor(0.0), torch::tensor(0.0)).item<double>() == 0.0);
  CHECK(hre_loss(torch::tensor(3.0), torch::tensor(9.0), 0.0).item<double>() == 3.0);
  CHECK(kLambdaSeg == 0.01);
}

TEST_CASE("CA-CFAR detections") {
  const GridSpec g = small_grid();
  FloatVolume flat(g.dims, 1.0f);
  CHECK(cfar_extract(flat, g, {1, 1, 1}, {3, 3, 3}, 1.5).points.rows() == 0);
  FloatVolume imp(g.dims, 1.0f);
  imp.at(7, 8, 9) = 100.0f;
  const auto d = cfar_extract(imp, g, {1, 1, 1}, {3, 3, 3}, 5.0);
  REQUIRE(d.voxels.size() == 1);
  CHECK(d.voxels[0] == Index3{7, 8, 9});
  CHECK(d.intensities[0] == 100.0);
  CHECK((d.points.row(0).transpose() - g.center_of({7, 8, 9})).norm() < 1e-12);
  // translation equivariance for interior impulses
  FloatVolume moved(g.dims, 1.0f);
  moved.at(9, 7, 10) = 100.0f;
  const auto e = cfar_extract(moved, g, {1, 1, 1}, {3, 3, 3}, 5.0);
  REQUIRE(e.voxels.size() == 1);
  CHECK(e.voxels[0] == Index3{9, 7, 10});
  // monotone in the rate
  const FloatVolume r = random_volume(g.dims, 9);
  std::size_t prev = std::numeric_limits<std::size_t>::max();
  for (int i = 0; i < 10; ++i) {
    const auto n = cfar_extract(r, g, {1, 1, 1}, {2, 3, 2}, 0.8 + 0.1 * i).voxels.size();
    CHECK(n <= prev);
    prev = n;
  }
  CHECK_THROWS_AS(cfar_extract(r, g, {3, 1, 1}, {3, 3, 3}, 2.0), ContractViolation);
  CHECK_THROWS_AS(cfar_extract(r, g, {1, 1, 1}, {3, 3, 3}, 0.0), ContractViolation);
}

TEST_CASE("CA-CFAR shell mean at the border uses the partial shell") {
  const GridSpec g = small_grid();
  FloatVolume v(g.dims, 1.0f);
  v.at(0, 0, 0) = 3.0f;
  // shell around the corner: (4^3 - 2^3) cells of value 1 -> mean 1
  CHECK(cfar_extract(v, g, {1, 1, 1}, {3, 3, 3}, 2.9).voxels.size() == 1);
  CHECK(cfar_extract(v, g, {1, 1, 1}, {3, 3, 3}, 3.0).voxels.empty());
}

TEST_CASE("extract shares one RoI across the window") {
  torch::manual_seed(1);
  HreModel m(HreConfig::tiny());
  GridSpec g;
  g.dims = {61, 56, 16};
  g.voxel_size = Vec3(0.2, 0.2, 0.2);
  const FloatVolume f = random_volume(g.dims, 5);
  const auto out = extract({f, f, f, f}, g, m);
  REQUIRE(out.size() == 4);
  for (const auto& r : out) {
    CHECK(r.roi_origin_voxel == out[3].roi_origin_voxel);
    CHECK(r.probs.data == out[3].probs.data);
  }
  std::vector<FloatVolume> mixed = {random_volume(g.dims, 6), f};
  const auto two = extract(mixed, g, m);
  CHECK(two[0].roi_origin_voxel == two[1].roi_origin_voxel);
}

TEST_CASE("dice score") {
  FloatVolume p({2, 2, 2});
  Volume<std::uint8_t> g({2, 2, 2});
  CHECK(dice_score(p, g) == doctest::Approx(1.0));
  p.data[0] = 0.9f;
  g.data[0] = 1;
  g.data[1] = 1;
  CHECK(dice_score(p, g) == doctest::Approx(2.0 / 3.0).epsilon(1e-6));
}
