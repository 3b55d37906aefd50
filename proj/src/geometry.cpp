// SPDX-License-Identifier: Apache-2.0
#include "radarmesh/geometry.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace radarmesh {

Mat3 axis_angle_to_matrix(const Vec3& aa) {
  const double t2 = aa.squaredNorm();
  double a = 0.0;
  double b = 0.0;
  if (t2 < 1e-8) {
    a = 1.0 - t2 / 6.0;
    b = 0.5 - t2 / 24.0;
  } else {
    const double t = std::sqrt(t2);
    a = std::sin(t) / t;
    b = (1.0 - std::cos(t)) / t2;
  }
  Mat3 k;
  k << 0.0, -aa.z(), aa.y(), aa.z(), 0.0, -aa.x(), -aa.y(), aa.x(), 0.0;
  return Mat3::Identity() + a * k + b * k * k;
}

Vec3 matrix_to_axis_angle(const Mat3& r) {
  Eigen::AngleAxisd aa(r);
  return aa.axis() * aa.angle();
}

double rotation_angle_between(const Mat3& a, const Mat3& b) {
  const double c = std::clamp(((a * b.transpose()).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

namespace {

struct Face {
  int v[3];
  Vec3 normal;
  double offset;
  bool alive;
};

std::uint64_t edge_key(int a, int b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

}  // namespace

std::vector<int> convex_hull_vertices(const Points& pts) {
  const int n = static_cast<int>(pts.rows());
  if (n < 4) throw DegenerateGeometryError("convex hull needs at least 4 points");

  auto p = [&](int i) -> Vec3 { return pts.row(i).transpose(); };

  Vec3 lo = p(0);
  Vec3 hi = p(0);
  for (int i = 1; i < n; ++i) {
    lo = lo.cwiseMin(p(i));
    hi = hi.cwiseMax(p(i));
  }
  const double scale = (hi - lo).maxCoeff();
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw DegenerateGeometryError("convex hull input points are coincident");
  }
  const double eps = 1e-11 * scale;
  const double degenerate_tol = 1e-9 * scale;

  // Initial tetrahedron from extreme points.
  int i0 = 0;
  for (int i = 1; i < n; ++i) {
    if (pts(i, 0) < pts(i0, 0)) i0 = i;
  }
  int i1 = -1;
  double best = -1.0;
  for (int i = 0; i < n; ++i) {
    const double d = (p(i) - p(i0)).norm();
    if (d > best) { best = d; i1 = i; }
  }
  if (best < degenerate_tol) throw DegenerateGeometryError("convex hull input points are coincident");
  const Vec3 dir = (p(i1) - p(i0)).normalized();
  int i2 = -1;
  best = -1.0;
  for (int i = 0; i < n; ++i) {
    const Vec3 w = p(i) - p(i0);
    const double d = (w - w.dot(dir) * dir).norm();
    if (d > best) { best = d; i2 = i; }
  }
  if (best < degenerate_tol) throw DegenerateGeometryError("convex hull input points are collinear");
  const Vec3 pn = (p(i1) - p(i0)).cross(p(i2) - p(i0)).normalized();
  int i3 = -1;
  best = -1.0;
  for (int i = 0; i < n; ++i) {
    const double d = std::abs(pn.dot(p(i) - p(i0)));
    if (d > best) { best = d; i3 = i; }
  }
  if (best < degenerate_tol) throw DegenerateGeometryError("convex hull input points are coplanar");

  const Vec3 interior = (p(i0) + p(i1) + p(i2) + p(i3)) / 4.0;
  std::vector<Face> faces;
  std::unordered_map<std::uint64_t, int> edge_owner;

  auto add_face = [&](int a, int b, int c) {
    Face f{{a, b, c}, Vec3::Zero(), 0.0, true};
    Vec3 nrm = (p(b) - p(a)).cross(p(c) - p(a));
    const double len = nrm.norm();
    if (len > 0.0) nrm /= len;
    f.normal = nrm;
    f.offset = nrm.dot(p(a));
    faces.push_back(f);
    const int id = static_cast<int>(faces.size()) - 1;
    edge_owner[edge_key(a, b)] = id;
    edge_owner[edge_key(b, c)] = id;
    edge_owner[edge_key(c, a)] = id;
  };
  auto add_oriented = [&](int a, int b, int c) {
    const Vec3 nrm = (p(b) - p(a)).cross(p(c) - p(a));
    if (nrm.dot(interior - p(a)) > 0.0) {
      add_face(a, c, b);
    } else {
      add_face(a, b, c);
    }
  };
  add_oriented(i0, i1, i2);
  add_oriented(i0, i1, i3);
  add_oriented(i0, i2, i3);
  add_oriented(i1, i2, i3);

  std::vector<int> visible;
  std::vector<std::pair<int, int>> horizon;
  std::vector<char> is_visible;
  for (int i = 0; i < n; ++i) {
    if (i == i0 || i == i1 || i == i2 || i == i3) continue;
    const Vec3 q = p(i);
    visible.clear();
    for (int f = 0; f < static_cast<int>(faces.size()); ++f) {
      if (faces[f].alive && faces[f].normal.dot(q) - faces[f].offset > eps) visible.push_back(f);
    }
    if (visible.empty()) continue;
    is_visible.assign(faces.size(), 0);
    for (int f : visible) is_visible[f] = 1;
    horizon.clear();
    for (int f : visible) {
      for (int e = 0; e < 3; ++e) {
        const int a = faces[f].v[e];
        const int b = faces[f].v[(e + 1) % 3];
        auto it = edge_owner.find(edge_key(b, a));
        if (it == edge_owner.end() || !is_visible[it->second]) horizon.emplace_back(a, b);
      }
    }
    for (int f : visible) {
      faces[f].alive = false;
      for (int e = 0; e < 3; ++e) {
        const std::uint64_t k = edge_key(faces[f].v[e], faces[f].v[(e + 1) % 3]);
        auto it = edge_owner.find(k);
        if (it != edge_owner.end() && it->second == f) edge_owner.erase(it);
      }
    }
    for (const auto& [a, b] : horizon) add_face(a, b, i);

    if (faces.size() > 8 * static_cast<std::size_t>(n) + 64) {
      std::vector<Face> live;
      for (const Face& f : faces) {
        if (f.alive) live.push_back(f);
      }
      faces.clear();
      edge_owner.clear();
      for (const Face& f : live) add_face(f.v[0], f.v[1], f.v[2]);
    }
  }

  std::vector<char> on_hull(n, 0);
  for (const Face& f : faces) {
    if (!f.alive) continue;
    for (int v : f.v) on_hull[v] = 1;
  }
  std::vector<int> out;
  for (int i = 0; i < n; ++i) {
    if (on_hull[i]) out.push_back(i);
  }
  return out;
}

}  // namespace radarmesh
