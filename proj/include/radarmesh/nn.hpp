// SPDX-License-Identifier: Apache-2.0
//
// Shared torch building blocks.
#pragma once

#include <torch/torch.h>

#include <vector>

#include "radarmesh/grid.hpp"

namespace radarmesh {

std::int64_t count_parameters(const torch::nn::Module& m);

// Two 3x3x3 convolutions with ReLU.
struct ConvBlock3dImpl : torch::nn::Module {
  ConvBlock3dImpl(int in, int out);
  torch::Tensor forward(const torch::Tensor& x);
  [[nodiscard]] double macs(double voxels) const;

  int in_ch;
  int out_ch;
  torch::nn::Conv3d c1{nullptr};
  torch::nn::Conv3d c2{nullptr};
};
TORCH_MODULE(ConvBlock3d);

// Encoder-decoder with two resolution halvings and skip connections.
// Widths base, 2*base, 4*base. Every RoI dimension must be divisible by 4.
struct UNet3DImpl : torch::nn::Module {
  UNet3DImpl(int in, int out, int base);

  struct Encoded {
    torch::Tensor e1;
    torch::Tensor e2;
    torch::Tensor bottom;
  };
  Encoded encode(const torch::Tensor& x);
  torch::Tensor decode(const Encoded& f);
  torch::Tensor forward(const torch::Tensor& x) { return decode(encode(x)); }

  [[nodiscard]] int bottom_channels() const { return 4 * base; }
  [[nodiscard]] double encoder_macs(const Index3& dims) const;
  [[nodiscard]] double decoder_macs(const Index3& dims) const;
  [[nodiscard]] std::int64_t encoder_parameters() const;

  int in_ch;
  int out_ch;
  int base;
  ConvBlock3d enc1{nullptr};
  ConvBlock3d enc2{nullptr};
  ConvBlock3d bottom{nullptr};
  torch::nn::ConvTranspose3d up2{nullptr};
  ConvBlock3d dec2{nullptr};
  torch::nn::ConvTranspose3d up1{nullptr};
  ConvBlock3d dec1{nullptr};
  torch::nn::Conv3d head{nullptr};
};
TORCH_MODULE(UNet3D);

// Per-row MLP over the last dimension: Linear+ReLU for every layer, the last
// one optionally without activation.
struct MlpImpl : torch::nn::Module {
  MlpImpl(const std::vector<int>& widths, bool relu_last);
  torch::Tensor forward(torch::Tensor x);
  [[nodiscard]] double macs_per_row() const;

  std::vector<int> widths;
  bool relu_last;
  torch::nn::ModuleList layers;
};
TORCH_MODULE(Mlp);

// FloatVolume <-> (X, Y, Z) float tensor.
torch::Tensor volume_to_tensor(const FloatVolume& v);
FloatVolume tensor_to_volume(const torch::Tensor& t);

}  // namespace radarmesh
