// SPDX-License-Identifier: Apache-2.0
//
// Stage 2: top-K point lifting, shape encoder, difference-volume motion
// branch, motion-shape attention, parameter head, teacher and losses.
#pragma once

#include <torch/torch.h>

#include <optional>
#include <vector>

#include <json.hpp>

#include "radarmesh/body_layer.hpp"
#include "radarmesh/hre.hpp"
#include "radarmesh/nn.hpp"

namespace radarmesh {

inline constexpr double kLambdaShape = 10.0;
inline constexpr double kLambdaMotion = 500.0;
inline constexpr double kJointWeight = 1.0;
inline constexpr double kGenderWeight = 0.1;
inline constexpr int kHeadOutputs = kNumContinuousParams + 1;

struct MmrConfig {
  int k = 512;
  int d_s = 256;
  int window = 4;
  Index3 roi_dims{32, 32, 24};
  int sa1_points = 128;
  int sa1_samples = 16;
  double sa1_radius = 0.3;
  std::vector<int> sa1_mlp{64, 64, 128};
  int sa2_points = 32;
  int sa2_samples = 16;
  double sa2_radius = 0.6;
  std::vector<int> sa2_mlp{128, 128, 256};
  std::vector<int> global_mlp{256, 512};
  int motion_base = 48;
  int heads = 4;
  int layers = 2;
  int ffn = 2048;
  int head_hidden = 1024;

  static MmrConfig full();
  static MmrConfig tiny();
  [[nodiscard]] nlohmann::json to_json() const;
  static MmrConfig from_json(const nlohmann::json& j);
};

// K x 5 rows (x, y, z, intensity, likelihood), sorted by descending
// likelihood, then descending intensity, then ascending linear voxel index.
struct PointSet5 {
  Eigen::Matrix<double, Eigen::Dynamic, 5, Eigen::RowMajor> points;

  [[nodiscard]] int size() const { return static_cast<int>(points.rows()); }
  [[nodiscard]] Points xyz() const { return points.leftCols<3>(); }
};

PointSet5 select_topk_points(const ReflectionVolume& r, int k);
// CFAR baseline: detections by descending intensity, likelihood column 1.
// Fewer than k detections are cycled; none falls back to the brightest voxels.
PointSet5 select_cfar_points(const CfarDetections& d, const FloatVolume& frame, const GridSpec& grid, int k);

// Row order used before encoding: likelihood desc, intensity desc, then x, y, z ascending.
void canonicalize(PointSet5& ps);

// Likelihood-weighted centroid (plain mean when all likelihoods are zero).
Vec3 point_centroid(const PointSet5& ps);

// Farthest point sampling; the start index is derived from a hash of the
// coordinates so evaluation is stable.
std::vector<int> farthest_point_sampling(const Points& xyz, int n);
// First `n` neighbors within radius in index order, padded with the first hit.
std::vector<int> ball_query(const Points& xyz, const Points& centers, double radius, int n);

struct GroupingPlan {
  std::vector<int> fps1;   // S1 indices into the input points
  std::vector<int> ball1;  // S1 x n1 indices into the input points
  std::vector<int> fps2;   // S2 indices into the S1 centers
  std::vector<int> ball2;  // S2 x n2 indices into the S1 centers
};
GroupingPlan plan_grouping(const Points& xyz, const MmrConfig& cfg);

// Batched plan tensors (int64), leading dim = number of point sets.
struct PlanTensors {
  torch::Tensor fps1, ball1, fps2, ball2;
  static PlanTensors stack(const std::vector<GroupingPlan>& plans, const MmrConfig& cfg);
};

// Two set-abstraction levels and a global max-pooled MLP to d_s.
struct PointNetEncoderImpl : torch::nn::Module {
  PointNetEncoderImpl(int in_features, const MmrConfig& cfg);
  // points: (N, K, in_features) with centered xyz in the first three columns.
  torch::Tensor forward(const torch::Tensor& points, const PlanTensors& plan);
  [[nodiscard]] double macs() const;

  int in_features;
  MmrConfig cfg;
  Mlp sa1{nullptr};
  Mlp sa2{nullptr};
  Mlp glob{nullptr};
  torch::nn::Linear proj{nullptr};
};
TORCH_MODULE(PointNetEncoder);

// Channel i = R_T - R_i, i = 1..T-1.
struct DifferenceVolume {
  std::vector<FloatVolume> channels;
  Index3 roi_origin_voxel{0, 0, 0};
};
DifferenceVolume difference_volume(const std::vector<ReflectionVolume>& volumes);
torch::Tensor difference_volume(const torch::Tensor& volumes);  // (B, T, ...) -> (B, T-1, ...)

struct MotionNetImpl : torch::nn::Module {
  MotionNetImpl(int in_channels, int base, int d_s);
  struct Output {
    torch::Tensor token;
    std::optional<torch::Tensor> flow;  // (B, 3, X', Y', Z') in training mode only
  };
  Output forward(const torch::Tensor& diff);
  [[nodiscard]] double macs(const Index3& roi, bool with_decoder) const;

  UNet3D unet{nullptr};
  torch::nn::Linear token{nullptr};
};
TORCH_MODULE(MotionNet);

struct SelfAttentionImpl : torch::nn::Module {
  SelfAttentionImpl(int d, int heads);
  // Returns (output, attention weights (B, H, L, L)).
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& x);

  int d;
  int heads;
  torch::nn::Linear qkv{nullptr};
  torch::nn::Linear out{nullptr};
};
TORCH_MODULE(SelfAttention);

struct FusionBlockImpl : torch::nn::Module {
  FusionBlockImpl(int d, int heads, int ffn);
  torch::Tensor forward(const torch::Tensor& x, torch::Tensor* weights);

  torch::nn::LayerNorm ln1{nullptr};
  SelfAttention attn{nullptr};
  torch::nn::LayerNorm ln2{nullptr};
  torch::nn::Linear fc1{nullptr};
  torch::nn::Linear fc2{nullptr};
};
TORCH_MODULE(FusionBlock);

// Pre-LN transformer over [z_m, s_1..s_T] with learned position embeddings;
// the output at position 0 is the fused token.
struct FusionImpl : torch::nn::Module {
  FusionImpl(int d, int layers, int heads, int ffn, int seq_len);
  torch::Tensor forward(const torch::Tensor& z_m, const torch::Tensor& tokens);
  // Same, with an explicit position embedding table (seq_len, d).
  torch::Tensor forward_with(const torch::Tensor& z_m, const torch::Tensor& tokens, const torch::Tensor& pos);
  [[nodiscard]] double macs() const;

  int d;
  int seq_len;
  int ffn;
  torch::Tensor pos;
  torch::nn::ModuleList blocks;
  torch::nn::LayerNorm ln_f{nullptr};
  std::vector<torch::Tensor> last_weights;  // per layer (B, H, L, L)
};
TORCH_MODULE(Fusion);

// Linear -> ReLU -> Linear to [alpha, beta, dtau, theta, g_logit].
struct RegressionHeadImpl : torch::nn::Module {
  RegressionHeadImpl(int d, int hidden);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Linear fc1{nullptr};
  torch::nn::Linear fc2{nullptr};
};
TORCH_MODULE(RegressionHead);

// Splits head output into absolute parameters (tau = center + dtau) and g.
struct HeadDecoded {
  torch::Tensor params;  // (B, 82)
  torch::Tensor g;       // (B,) probability
};
HeadDecoded decode_head(const torch::Tensor& raw, const torch::Tensor& center);

// Inputs for one batch of windows.
struct MmrBatch {
  torch::Tensor points;   // (B, T, K, 5) with per-frame centered xyz
  PlanTensors plan;       // leading dim B*T
  torch::Tensor centers;  // (B, T, 3) world-frame centroids
  torch::Tensor diff;     // (B, T-1, X', Y', Z')
};

struct MmrOutput {
  torch::Tensor params;        // (B, 82)
  torch::Tensor g;             // (B,)
  torch::Tensor shape_tokens;  // (B, T, d_s)
  std::optional<torch::Tensor> flow;
};

struct MmrModelImpl : torch::nn::Module {
  explicit MmrModelImpl(const MmrConfig& cfg);
  // motion_on=false replaces z_m by a learned constant and never runs the motion net.
  MmrOutput forward(const MmrBatch& b, bool motion_on = true);
  [[nodiscard]] double macs() const;

  MmrConfig cfg;
  PointNetEncoder shape{nullptr};
  MotionNet motion{nullptr};
  torch::Tensor motion_const;
  Fusion fusion{nullptr};
  RegressionHead head{nullptr};
};
TORCH_MODULE(MmrModel);

// PointNet++ on bare xyz plus its own head; one frame per row.
struct TeacherImpl : torch::nn::Module {
  explicit TeacherImpl(const MmrConfig& cfg);
  struct Output {
    torch::Tensor token;
    torch::Tensor params;
    torch::Tensor g;
  };
  // points (N, K, 3) centered, centers (N, 3)
  Output forward(const torch::Tensor& points, const PlanTensors& plan, const torch::Tensor& centers);

  MmrConfig cfg;
  PointNetEncoder encoder{nullptr};
  RegressionHead head{nullptr};
};
TORCH_MODULE(Teacher);

// (1/T) sum_i ||s_i - s_i^teacher||^2, averaged over the batch. Teacher is detached.
torch::Tensor shape_distill_loss(const torch::Tensor& student, const torch::Tensor& teacher);
// Mean squared error over every entry, or over occupied voxels when masked.
torch::Tensor motion_loss(const torch::Tensor& f_hat, const torch::Tensor& f_gt, bool occupied_only = false);

struct SmplLoss {
  torch::Tensor total, theta, alpha, beta, tau, joints, gender;
};
// pred/gt: (B, 82); pred_g probability, gt_g in {0, 1}; joints use the gt gender template.
SmplLoss smpl_loss(const torch::Tensor& pred, const torch::Tensor& pred_g, const torch::Tensor& gt,
                   const torch::Tensor& gt_g, const BodyLayer& body);

struct MmrLossWeights {
  double lambda_shape = kLambdaShape;
  double lambda_motion = kLambdaMotion;
  bool motion_off = false;
  bool distill_off = false;
};
torch::Tensor mmr_loss(const torch::Tensor& smpl, const std::optional<torch::Tensor>& shape,
                       const std::optional<torch::Tensor>& motion, const MmrLossWeights& w = {});

// Convert a decoded row back to BodyParams.
BodyParams params_from_row(const torch::Tensor& params, double g);

}  // namespace radarmesh
