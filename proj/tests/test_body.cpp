#include "test_support.hpp"

#include <random>

#include "radarmesh/body.hpp"
#include "radarmesh/body_layer.hpp"
#include "radarmesh/errors.hpp"
#include "radarmesh/geometry.hpp"

using namespace radarmesh;

namespace {

BodyParams random_params(std::mt19937_64& rng, double g = 1.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  BodyParams p;
  for (int a = 0; a < 3; ++a) {
    p.alpha[a] = 0.8 * u(rng);
    p.tau[a] = 2.0 * u(rng);
  }
  for (int k = 0; k < kNumBetas; ++k) p.beta[k] = 1.5 * u(rng);
  for (int j = 0; j < kNumJoints; ++j)
    for (int a = 0; a < 3; ++a) p.theta(j, a) = 0.6 * u(rng);
  p.g = g;
  return p;
}

torch::Tensor params_tensor(const std::vector<BodyParams>& ps) {
  auto t = torch::empty({static_cast<long>(ps.size()), kNumContinuousParams}, torch::kFloat64);
  for (std::size_t b = 0; b < ps.size(); ++b) {
    const auto v = ps[b].to_vector();
    for (int i = 0; i < kNumContinuousParams; ++i) t[static_cast<long>(b)][i] = v[i];
  }
  return t;
}

}  // namespace

TEST_CASE("template structure") {
  const BodyModel& m = default_body_model();
  for (const TemplateBody* t : {&m.female, &m.male}) {
    CHECK(t->num_vertices() == 1024);
    CHECK(t->faces.minCoeff() >= 0);
    CHECK(t->faces.maxCoeff() < t->num_vertices());
    CHECK(t->skin_weights.minCoeff() >= 0.0);
    CHECK((t->skin_weights.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  }
  CHECK(m.female.faces == m.male.faces);
  CHECK((m.female.rest_vertices - m.male.rest_vertices).norm() > 0.1);
  CHECK(&select_template(0.5) == &m.male);
  CHECK(&select_template(0.4999) == &m.female);
}

TEST_CASE("too few vertices is a config error") {
  TemplateConfig cfg;
  cfg.num_vertices = 150;
  CHECK_THROWS_AS(build_template(cfg, Gender::male), ConfigError);
  cfg.num_vertices = 1024;
  cfg.measures[kThigh] = -0.1;
  CHECK_THROWS_AS(build_template(cfg, Gender::male), ConfigError);
}

TEST_CASE("param vector round trip") {
  std::mt19937_64 rng(7);
  const BodyParams p = random_params(rng, 0.3);
  const auto v = p.to_vector();
  REQUIRE(v.size() == 83);
  const BodyParams q = BodyParams::from_vector(v);
  CHECK(q.to_vector() == v);
  CHECK_THROWS(BodyParams::from_vector(std::vector<double>(80, 0.0)));
}

TEST_CASE("zero params reproduce the rest pose") {
  const TemplateBody& t = default_body_model().male;
  const Mesh m = forward(t, BodyParams{});
  CHECK((m.vertices - t.rest_vertices).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((m.joints - t.joint_rest_positions).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("first shape coefficient is a uniform 5% scale") {
  const TemplateBody& t = default_body_model().male;
  BodyParams p;
  p.beta[0] = 1.0;
  const Mesh m = forward(t, p);
  CHECK((m.vertices - 1.05 * t.rest_vertices).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((m.joints - 1.05 * t.joint_rest_positions).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("global orientation rotates rigidly about the pelvis") {
  const TemplateBody& t = default_body_model().female;
  BodyParams p;
  p.alpha = Vec3(0.1, -0.4, 1.3);
  p.tau = Vec3(3.0, 4.0, 0.9);
  const Mesh m = forward(t, p);
  const Mat3 r = axis_angle_to_matrix(p.alpha);
  const Vec3 j0 = t.joint_rest_positions.row(0).transpose();
  double worst = 0.0;
  for (int i = 0; i < t.num_vertices(); ++i) {
    const Vec3 want = r * (t.rest_vertices.row(i).transpose() - j0) + j0 + p.tau;
    worst = std::max(worst, (m.vertices.row(i).transpose() - want).norm());
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("posing preserves bone lengths") {
  std::mt19937_64 rng(11);
  const TemplateBody& t = default_body_model().male;
  for (int trial = 0; trial < 10; ++trial) {
    BodyParams p = random_params(rng);
    p.beta.setZero();
    const Mesh m = forward(t, p);
    for (int j = 1; j < kNumJoints; ++j) {
      const int par = kJointParents[j];
      const double rest = (t.joint_rest_positions.row(j) - t.joint_rest_positions.row(par)).norm();
      const double posed = (m.joints.row(j) - m.joints.row(par)).norm();
      CHECK(posed == doctest::Approx(rest).epsilon(1e-10));
    }
  }
}

TEST_CASE("torch layer matches the reference forward") {
  std::mt19937_64 rng(13);
  const BodyModel& model = default_body_model();
  const BodyLayer layer(model, torch::kFloat64);
  std::vector<BodyParams> ps = {random_params(rng, 1.0), random_params(rng, 0.0),
                                random_params(rng, 1.0)};
  const auto flat = params_tensor(ps);
  const auto gender = torch::tensor({1, 0, 1}, torch::kLong);
  const auto out = layer.forward(ParamTensors::split(flat), gender);
  for (std::size_t b = 0; b < ps.size(); ++b) {
    const Mesh m = forward(model.select(ps[b].g), ps[b]);
    auto v = out.vertices[static_cast<long>(b)].contiguous();
    auto acc = v.accessor<double, 2>();
    double worst = 0.0;
    for (int i = 0; i < m.vertices.rows(); ++i)
      for (int a = 0; a < 3; ++a) worst = std::max(worst, std::abs(acc[i][a] - m.vertices(i, a)));
    CHECK(worst < 1e-10);
    auto j = out.joints[static_cast<long>(b)].contiguous();
    auto jacc = j.accessor<double, 2>();
    for (int i = 0; i < kNumJoints; ++i)
      for (int a = 0; a < 3; ++a) CHECK(std::abs(jacc[i][a] - m.joints(i, a)) < 1e-10);
  }
}

TEST_CASE("torch layer gradients match finite differences") {
  std::mt19937_64 rng(17);
  const BodyLayer layer(default_body_model(), torch::kFloat64);
  const auto flat = params_tensor({random_params(rng)});
  const auto gender = torch::tensor({1}, torch::kLong);
  const auto weights = torch::randn({1, 1024, 3}, torch::kFloat64);
  auto loss_of = [&](const torch::Tensor& x) {
    const auto out = layer.forward(ParamTensors::split(x), gender);
    return (out.vertices * weights).sum() + out.joints.pow(2).sum();
  };
  auto x = flat.clone().requires_grad_(true);
  loss_of(x).backward();
  const auto grad = x.grad();
  const double h = 1e-6;
  for (int i = 0; i < kNumContinuousParams; ++i) {
    auto xp = flat.clone();
    auto xm = flat.clone();
    xp[0][i] += h;
    xm[0][i] -= h;
    const double fd = (loss_of(xp).item<double>() - loss_of(xm).item<double>()) / (2 * h);
    const double an = grad[0][i].item<double>();
    CHECK(std::abs(an - fd) <= 1e-4 * std::max(std::abs(an), std::abs(fd)) + 1e-8);
  }
}

TEST_CASE("torch rotation is smooth at zero") {
  auto aa = torch::zeros({1, 3}, torch::kFloat64).requires_grad_(true);
  const auto r = axis_angle_to_matrix(aa);
  CHECK(torch::allclose(r[0], torch::eye(3, torch::kFloat64)));
  r.sum().backward();
  CHECK(torch::isfinite(aa.grad()).all().item<bool>());
}

TEST_CASE("root rotation and translation match an external rigid transform") {
  std::mt19937_64 rng(23);
  const TemplateBody& t = default_body_model().male;
  BodyParams p = random_params(rng);
  BodyParams zero_root = p;
  zero_root.alpha.setZero();
  zero_root.tau.setZero();
  const Mesh base = forward(t, zero_root);
  const Mesh moved = forward(t, p);
  const Mat3 r = axis_angle_to_matrix(p.alpha);
  const Vec3 j0 = base.joints.row(0).transpose();
  for (int i = 0; i < t.num_vertices(); ++i) {
    const Vec3 want = r * (base.vertices.row(i).transpose() - j0) + j0 + p.tau;
    CHECK((moved.vertices.row(i).transpose() - want).norm() < 1e-6);
  }
}

TEST_CASE("skinning weights are sparse and the tree is ordered") {
  const TemplateBody& t = default_body_model().female;
  for (int i = 0; i < t.num_vertices(); ++i) CHECK((t.skin_weights.row(i).array() > 0.0).count() <= 4);
  for (int j = 1; j < kNumJoints; ++j) CHECK(t.parent[j] < j);
  CHECK(t.parent[0] == kRootParent);
}

TEST_CASE("quarter turn maps x to y") {
  const Mat3 r = axis_angle_to_matrix(Vec3(0, 0, std::acos(-1.0) / 2));
  CHECK((r * Vec3(1, 0, 0) - Vec3(0, 1, 0)).norm() < 1e-12);
  CHECK(r.determinant() == doctest::Approx(1.0));
}
