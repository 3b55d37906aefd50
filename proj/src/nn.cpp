// SPDX-License-Identifier: Apache-2.0
#include "radarmesh/nn.hpp"

namespace radarmesh {

namespace F = torch::nn::functional;

std::int64_t count_parameters(const torch::nn::Module& m) {
  std::int64_t n = 0;
  for (const auto& p : m.parameters()) n += p.numel();
  return n;
}

ConvBlock3dImpl::ConvBlock3dImpl(int in, int out) : in_ch(in), out_ch(out) {
  c1 = register_module("c1", torch::nn::Conv3d(torch::nn::Conv3dOptions(in, out, 3).padding(1)));
  c2 = register_module("c2", torch::nn::Conv3d(torch::nn::Conv3dOptions(out, out, 3).padding(1)));
}

torch::Tensor ConvBlock3dImpl::forward(const torch::Tensor& x) {
  return torch::relu(c2(torch::relu(c1(x))));
}

double ConvBlock3dImpl::macs(double voxels) const {
  return voxels * 27.0 * (static_cast<double>(in_ch) * out_ch + static_cast<double>(out_ch) * out_ch);
}

UNet3DImpl::UNet3DImpl(int in, int out, int base_width) : in_ch(in), out_ch(out), base(base_width) {
  enc1 = register_module("enc1", ConvBlock3d(in, base));
  enc2 = register_module("enc2", ConvBlock3d(base, 2 * base));
  bottom = register_module("bottom", ConvBlock3d(2 * base, 4 * base));
  up2 = register_module("up2", torch::nn::ConvTranspose3d(torch::nn::ConvTranspose3dOptions(4 * base, 2 * base, 2).stride(2)));
  dec2 = register_module("dec2", ConvBlock3d(4 * base, 2 * base));
  up1 = register_module("up1", torch::nn::ConvTranspose3d(torch::nn::ConvTranspose3dOptions(2 * base, base, 2).stride(2)));
  dec1 = register_module("dec1", ConvBlock3d(2 * base, base));
  head = register_module("head", torch::nn::Conv3d(torch::nn::Conv3dOptions(base, out, 1)));
}

UNet3DImpl::Encoded UNet3DImpl::encode(const torch::Tensor& x) {
  Encoded f;
  f.e1 = enc1(x);
  f.e2 = enc2(F::max_pool3d(f.e1, F::MaxPool3dFuncOptions(2)));
  f.bottom = bottom(F::max_pool3d(f.e2, F::MaxPool3dFuncOptions(2)));
  return f;
}

torch::Tensor UNet3DImpl::decode(const Encoded& f) {
  auto d2 = dec2(torch::cat({up2(f.bottom), f.e2}, 1));
  auto d1 = dec1(torch::cat({up1(d2), f.e1}, 1));
  return head(d1);
}

double UNet3DImpl::encoder_macs(const Index3& d) const {
  const double v = static_cast<double>(d[0]) * d[1] * d[2];
  return enc1->macs(v) + enc2->macs(v / 8.0) + bottom->macs(v / 64.0);
}

double UNet3DImpl::decoder_macs(const Index3& d) const {
  const double v = static_cast<double>(d[0]) * d[1] * d[2];
  const double b = base;
  return v / 8.0 * (4 * b) * (2 * b) + dec2->macs(v / 8.0) + v * (2 * b) * b + dec1->macs(v) + v * b * out_ch;
}

std::int64_t UNet3DImpl::encoder_parameters() const {
  return count_parameters(*enc1) + count_parameters(*enc2) + count_parameters(*bottom);
}

MlpImpl::MlpImpl(const std::vector<int>& w, bool relu_at_end) : widths(w), relu_last(relu_at_end) {
  TORCH_CHECK(widths.size() >= 2, "MLP needs at least input and output width");
  layers = register_module("layers", torch::nn::ModuleList());
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) layers->push_back(torch::nn::Linear(widths[i], widths[i + 1]));
}

torch::Tensor MlpImpl::forward(torch::Tensor x) {
  const auto n = layers->size();
  for (std::size_t i = 0; i < n; ++i) {
    x = layers[i]->as<torch::nn::Linear>()->forward(x);
    if (i + 1 < n || relu_last) x = torch::relu(x);
  }
  return x;
}

double MlpImpl::macs_per_row() const {
  double m = 0.0;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) m += static_cast<double>(widths[i]) * widths[i + 1];
  return m;
}

torch::Tensor volume_to_tensor(const FloatVolume& v) {
  return torch::from_blob(const_cast<float*>(v.data.data()), {v.dims[0], v.dims[1], v.dims[2]}, torch::kFloat32)
      .clone();
}

FloatVolume tensor_to_volume(const torch::Tensor& t) {
  TORCH_CHECK(t.dim() == 3, "expected a 3D tensor");
  const auto c = t.to(torch::kFloat32).contiguous();
  FloatVolume v({static_cast<int>(c.size(0)), static_cast<int>(c.size(1)), static_cast<int>(c.size(2))});
  std::memcpy(v.data.data(), c.data_ptr<float>(), v.data.size() * sizeof(float));
  return v;
}

}  // namespace radarmesh
