// SPDX-License-Identifier: Apache-2.0
//
// Stage 1: coarse localization from three max-projections, RoI cropping and
// voxel segmentation, plus the CA-CFAR baseline.
#pragma once

#include <torch/torch.h>

#include <array>
#include <vector>

#include "radarmesh/grid.hpp"
#include "radarmesh/nn.hpp"

namespace radarmesh {

inline constexpr double kLambdaSeg = 1e-2;
inline constexpr double kPosWeight = 50.0;
inline constexpr double kDiceEps = 1e-6;
inline constexpr double kProbClamp = 1e-7;

struct HreConfig {
  Index3 grid_dims{121, 111, 31};
  Index3 roi_dims{32, 32, 24};
  int loc_width = 32;
  int seg_base = 16;

  static HreConfig full();
  static HreConfig tiny();
};

// Max-projections along z, x and y: XY is X x Y, YZ is Y x Z, XZ is X x Z.
struct ViewMaps {
  Eigen::MatrixXf xy;
  Eigen::MatrixXf yz;
  Eigen::MatrixXf xz;
};
ViewMaps project_views(const FloatVolume& frame);

// Batched version: (B, X, Y, Z) -> three (B, 1, ., .) tensors.
struct ViewTensors {
  torch::Tensor xy;
  torch::Tensor yz;
  torch::Tensor xz;
};
ViewTensors project_views(const torch::Tensor& frames);

// 2D coordinate regressor: CoordConv input, three 3x3 conv layers,
// softmax-attention pooling of features and pixel coordinates, and a linear
// residual head. Output is a continuous pixel coordinate (row, col), pixel
// centers at integers.
struct Localizer2DImpl : torch::nn::Module {
  explicit Localizer2DImpl(int width);
  torch::Tensor forward(const torch::Tensor& view);
  [[nodiscard]] double macs(int h, int w) const;

  int width;
  torch::nn::Conv2d c1{nullptr};
  torch::nn::Conv2d c2{nullptr};
  torch::nn::Conv2d c3{nullptr};
  torch::nn::Conv2d attn{nullptr};
  torch::nn::Linear head{nullptr};
};
TORCH_MODULE(Localizer2D);

// Shared-axis average of the three view predictions, in voxel coordinates:
// x from (XY, XZ), y from (XY, YZ), z from (YZ, XZ).
Vec3 combine_view_coords(const Eigen::Vector2d& xy, const Eigen::Vector2d& yz, const Eigen::Vector2d& xz);
torch::Tensor combine_view_coords(const torch::Tensor& xy, const torch::Tensor& yz, const torch::Tensor& xz);

// Clamp continuous voxel coordinates into [0, dims-1].
Vec3 clamp_voxel_coords(const Vec3& c, const Index3& dims);

struct HreModelImpl : torch::nn::Module {
  explicit HreModelImpl(const HreConfig& cfg);

  // (B, X, Y, Z) frames -> (B, 3) unclamped continuous voxel coordinates.
  torch::Tensor localize(const torch::Tensor& frames);
  // (B, 1, X', Y', Z') crops -> logits of the same shape.
  torch::Tensor segment_logits(const torch::Tensor& crops);

  [[nodiscard]] double macs() const;

  HreConfig cfg;
  Localizer2D loc_xy{nullptr};
  Localizer2D loc_yz{nullptr};
  Localizer2D loc_xz{nullptr};
  UNet3D seg{nullptr};
};
TORCH_MODULE(HreModel);

struct CoarseCenter {
  Vec3 p_hat = Vec3::Zero();  // world frame, meters
};

CoarseCenter coarse_localize(const FloatVolume& frame, const GridSpec& grid, HreModel& model);

struct RoiVolume {
  FloatVolume values;
  Index3 roi_origin_voxel{0, 0, 0};
  GridSpec grid;          // parent grid
  bool shifted = false;   // window was moved inward at a border

  [[nodiscard]] GridSpec roi_grid() const { return grid.sub_grid(roi_origin_voxel, values.dims); }
};

RoiVolume crop_roi(const FloatVolume& frame, const GridSpec& grid, const Vec3& center,
                   const Index3& roi_dims);
RoiVolume crop_roi_at(const FloatVolume& frame, const GridSpec& grid, const Index3& origin,
                      const Index3& roi_dims);
Volume<std::uint8_t> crop_occupancy(const Volume<std::uint8_t>& occ, const Index3& origin, const Index3& roi_dims);

struct ReflectionVolume {
  FloatVolume probs;
  Index3 roi_origin_voxel{0, 0, 0};
  FloatVolume source_intensity;
  GridSpec grid;  // parent grid

  [[nodiscard]] GridSpec roi_grid() const { return grid.sub_grid(roi_origin_voxel, probs.dims); }
};

ReflectionVolume segment_voxels(const RoiVolume& roi, HreModel& model);

// Squared L2 distance per batch row.
torch::Tensor loc_loss(const torch::Tensor& p_hat, const torch::Tensor& p_gt);

struct SegLoss {
  torch::Tensor total;
  torch::Tensor bce;
  torch::Tensor dice;
};
// Positive-weighted mean BCE plus Dice (Dice averaged over the batch).
SegLoss seg_loss(const torch::Tensor& probs, const torch::Tensor& gt, double pos_weight = kPosWeight,
                 bool use_dice = true, double eps = kDiceEps);
torch::Tensor hre_loss(const torch::Tensor& loc, const torch::Tensor& seg, double lambda_seg = kLambdaSeg);

struct CfarDetections {
  Points points;                    // world-frame voxel centers
  std::vector<double> intensities;
  std::vector<Index3> voxels;
};

CfarDetections cfar_extract(const FloatVolume& frame, const GridSpec& grid, const Index3& guard,
                            const Index3& train, double rate);

// Localizes on the last frame and applies that RoI to every frame.
std::vector<ReflectionVolume> extract(const std::vector<FloatVolume>& frames, const GridSpec& grid,
                                      HreModel& model);

double dice_score(const FloatVolume& probs, const Volume<std::uint8_t>& gt, double threshold = 0.5);

}  // namespace radarmesh
