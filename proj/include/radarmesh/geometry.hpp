// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "radarmesh/grid.hpp"

namespace radarmesh {

// Rodrigues' formula. Uses Taylor expansions below 1e-8 rad^2 so that the
// map is smooth through the zero rotation.
Mat3 axis_angle_to_matrix(const Vec3& aa);

// Inverse of axis_angle_to_matrix with angle in [0, pi].
Vec3 matrix_to_axis_angle(const Mat3& r);

// Geodesic angle between two rotations in radians, in [0, pi].
double rotation_angle_between(const Mat3& a, const Mat3& b);

// Indices of the input points that are vertices of their 3D convex hull.
// Throws DegenerateGeometryError when all points are coincident, collinear
// or coplanar (relative to the point-cloud scale).
std::vector<int> convex_hull_vertices(const Points& pts);

}  // namespace radarmesh
