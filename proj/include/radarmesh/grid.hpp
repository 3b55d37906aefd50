// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "radarmesh/errors.hpp"

namespace radarmesh {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Index3 = std::array<int, 3>;

// Dense N x 3 matrix of points, one per row.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

// Axis-aligned voxel grid. Cell (i,j,k) covers the half-open box
// [origin + idx*size, origin + (idx+1)*size). All world<->voxel conversions
// in the project go through this type.
struct GridSpec {
  Index3 dims{121, 111, 31};
  Vec3 origin{0.0, 0.0, 0.0};
  Vec3 voxel_size{0.1, 0.1, 0.1};

  [[nodiscard]] std::size_t num_voxels() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }

  [[nodiscard]] bool valid() const {
    for (int a = 0; a < 3; ++a) {
      if (dims[a] <= 0 || !(voxel_size[a] > 0.0) || !std::isfinite(origin[a])) return false;
    }
    return true;
  }

  [[nodiscard]] bool contains(const Index3& v) const {
    return v[0] >= 0 && v[1] >= 0 && v[2] >= 0 && v[0] < dims[0] && v[1] < dims[1] &&
           v[2] < dims[2];
  }

  // Unclamped voxel index. The 1e-9 voxel nudge keeps points that sit on a
  // shared face (up to rounding of decimal voxel sizes) in the higher cell.
  [[nodiscard]] Index3 raw_index(const Vec3& p) const {
    Index3 out{};
    for (int a = 0; a < 3; ++a) {
      out[a] = static_cast<int>(std::floor((p[a] - origin[a]) / voxel_size[a] + 1e-9));
    }
    return out;
  }

  [[nodiscard]] std::optional<Index3> voxel_of(const Vec3& p) const {
    Index3 v = raw_index(p);
    if (!contains(v)) return std::nullopt;
    return v;
  }

  [[nodiscard]] Vec3 center_of(const Index3& v) const {
    return {origin[0] + (v[0] + 0.5) * voxel_size[0], origin[1] + (v[1] + 0.5) * voxel_size[1],
            origin[2] + (v[2] + 0.5) * voxel_size[2]};
  }

  // Continuous voxel coordinate (voxel centers at integers).
  [[nodiscard]] Vec3 to_voxel_coords(const Vec3& p) const {
    return {(p[0] - origin[0]) / voxel_size[0] - 0.5, (p[1] - origin[1]) / voxel_size[1] - 0.5,
            (p[2] - origin[2]) / voxel_size[2] - 0.5};
  }

  [[nodiscard]] Vec3 from_voxel_coords(const Vec3& c) const {
    return {origin[0] + (c[0] + 0.5) * voxel_size[0], origin[1] + (c[1] + 0.5) * voxel_size[1],
            origin[2] + (c[2] + 0.5) * voxel_size[2]};
  }

  [[nodiscard]] std::size_t linear(const Index3& v) const {
    return (static_cast<std::size_t>(v[0]) * dims[1] + v[1]) * dims[2] + v[2];
  }

  [[nodiscard]] Index3 unlinear(std::size_t idx) const {
    Index3 v{};
    v[2] = static_cast<int>(idx % dims[2]);
    idx /= dims[2];
    v[1] = static_cast<int>(idx % dims[1]);
    v[0] = static_cast<int>(idx / dims[1]);
    return v;
  }

  // Grid of a sub-window starting at voxel `offset` with `sub_dims` cells.
  [[nodiscard]] GridSpec sub_grid(const Index3& offset, const Index3& sub_dims) const {
    GridSpec g;
    g.dims = sub_dims;
    g.voxel_size = voxel_size;
    for (int a = 0; a < 3; ++a) g.origin[a] = origin[a] + offset[a] * voxel_size[a];
    return g;
  }

  [[nodiscard]] Vec3 extent() const {
    return {dims[0] * voxel_size[0], dims[1] * voxel_size[1], dims[2] * voxel_size[2]};
  }

  bool operator==(const GridSpec& o) const {
    return dims == o.dims && origin == o.origin && voxel_size == o.voxel_size;
  }
};

// Origin voxel of a `roi_dims` window centered on `center`, shifted inward
// so the window never leaves the grid.
inline Index3 roi_origin_for(const GridSpec& grid, const Index3& center, const Index3& roi_dims) {
  Index3 o{};
  for (int a = 0; a < 3; ++a) {
    require(roi_dims[a] > 0 && roi_dims[a] <= grid.dims[a], "RoI does not fit inside the grid");
    o[a] = center[a] - roi_dims[a] / 2;
    if (o[a] < 0) o[a] = 0;
    if (o[a] + roi_dims[a] > grid.dims[a]) o[a] = grid.dims[a] - roi_dims[a];
  }
  return o;
}

// Dense row-major X x Y x Z volume.
template <typename T>
struct Volume {
  Index3 dims{0, 0, 0};
  std::vector<T> data;

  Volume() = default;
  explicit Volume(const Index3& d, T fill = T{})
      : dims(d), data(static_cast<std::size_t>(d[0]) * d[1] * d[2], fill) {}

  [[nodiscard]] std::size_t size() const { return data.size(); }
  [[nodiscard]] std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * dims[1] + j) * dims[2] + k;
  }
  T& at(int i, int j, int k) { return data[index(i, j, k)]; }
  const T& at(int i, int j, int k) const { return data[index(i, j, k)]; }
  T& at(const Index3& v) { return at(v[0], v[1], v[2]); }
  const T& at(const Index3& v) const { return at(v[0], v[1], v[2]); }
};

using FloatVolume = Volume<float>;

struct OccupancyMap {
  GridSpec grid;
  Volume<std::uint8_t> values;
};

// 3 x X' x Y' x Z' displacement field in meters/frame, stored as three volumes.
struct FlowVolume {
  GridSpec grid;
  std::array<FloatVolume, 3> values;
};

}  // namespace radarmesh
