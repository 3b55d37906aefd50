#include "test_support.hpp"

#include <Eigen/Geometry>
#include <random>

#include "radarmesh/geometry.hpp"

using namespace radarmesh;

namespace {
// Rotation from a unit quaternion built independently of Rodrigues.
Mat3 quat_rotation(const Vec3& aa) {
  const double t = aa.norm();
  if (t == 0.0) return Mat3::Identity();
  const Vec3 u = aa / t;
  const double w = std::cos(t / 2), s = std::sin(t / 2);
  const double x = u.x() * s, y = u.y() * s, z = u.z() * s;
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w),
      2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
      2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y);
  return r;
}
}  // namespace

TEST_CASE("axis-angle matches quaternion rotation") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 200; ++i) {
    Vec3 aa(u(rng), u(rng), u(rng));
    if (aa.norm() > 3.1) aa *= 3.1 / aa.norm();
    CHECK((axis_angle_to_matrix(aa) - quat_rotation(aa)).norm() < 1e-12);
    CHECK((matrix_to_axis_angle(axis_angle_to_matrix(aa)) - aa).norm() < 1e-9);
  }
  CHECK((axis_angle_to_matrix(Vec3(1e-10, 0, 0)) - Mat3::Identity()).norm() < 1e-9);
}

TEST_CASE("geodesic angle") {
  const Mat3 a = axis_angle_to_matrix(Vec3(0, 0, 0.3));
  const Mat3 b = axis_angle_to_matrix(Vec3(0, 0, 1.0));
  CHECK(rotation_angle_between(a, b) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(rotation_angle_between(a, a) == doctest::Approx(0.0));
}

TEST_CASE("convex hull of cube corners plus interior points") {
  Points p(8 + 50, 3);
  int r = 0;
  for (int x = 0; x < 2; ++x)
    for (int y = 0; y < 2; ++y)
      for (int z = 0; z < 2; ++z) p.row(r++) = Eigen::RowVector3d(x, y, z);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (; r < p.rows(); ++r) p.row(r) = Eigen::RowVector3d(u(rng), u(rng), u(rng));
  const auto hull = convex_hull_vertices(p);
  CHECK(hull == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
}

TEST_CASE("hull of points on a sphere keeps all of them") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  Points p(300, 3);
  for (int i = 0; i < 300; ++i) {
    Vec3 v(g(rng), g(rng), g(rng));
    p.row(i) = v.normalized().transpose();
  }
  CHECK(convex_hull_vertices(p).size() == 300);
}

TEST_CASE("degenerate hull input throws") {
  Points p(5, 3);
  p << 0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 0, 0.5, 0.5, 0;
  CHECK_THROWS_AS(convex_hull_vertices(p), DegenerateGeometryError);
}
