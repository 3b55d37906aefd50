// SPDX-License-Identifier: Apache-2.0
//
// Differentiable, batched version of body::forward for training losses.
#pragma once

#include <torch/torch.h>

#include "radarmesh/body.hpp"

namespace radarmesh {

// (..., 3) axis-angle -> (..., 3, 3) rotation; smooth at zero.
torch::Tensor axis_angle_to_matrix(const torch::Tensor& aa);

// Split of the 82 continuous parameters, each with a leading batch dim.
struct ParamTensors {
  torch::Tensor alpha;  // B x 3
  torch::Tensor beta;   // B x 10
  torch::Tensor tau;    // B x 3
  torch::Tensor theta;  // B x 22 x 3

  // B x 82 in BodyParams::to_vector order (without g).
  static ParamTensors split(const torch::Tensor& flat);
  [[nodiscard]] torch::Tensor flat() const;
};

class BodyLayer {
 public:
  explicit BodyLayer(const BodyModel& model, torch::Dtype dtype = torch::kFloat32);

  struct Output {
    torch::Tensor vertices;  // B x N x 3
    torch::Tensor joints;    // B x 22 x 3
  };

  // gender: B int64 tensor, 0 = female, 1 = male.
  [[nodiscard]] Output forward(const ParamTensors& params, const torch::Tensor& gender) const;

  [[nodiscard]] torch::Dtype dtype() const { return dtype_; }

 private:
  torch::Dtype dtype_;
  torch::Tensor rest_;         // 2 x N x 3
  torch::Tensor shape_basis_;  // 2 x N x 3 x 10
  torch::Tensor joint_rest_;   // 2 x 22 x 3
  torch::Tensor joint_basis_;  // 2 x 22 x 3 x 10
  torch::Tensor weights_;      // N x 22
};

}  // namespace radarmesh
