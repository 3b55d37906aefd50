// SPDX-License-Identifier: Apache-2.0
#include "radarmesh/hre.hpp"

#include <algorithm>
#include <limits>

#include "radarmesh/errors.hpp"

namespace radarmesh {

HreConfig HreConfig::full() { return HreConfig{}; }

HreConfig HreConfig::tiny() {
  HreConfig c;
  c.grid_dims = {61, 56, 16};
  c.roi_dims = {16, 16, 12};
  c.loc_width = 16;
  c.seg_base = 8;
  return c;
}

ViewMaps project_views(const FloatVolume& frame) {
  const Index3 d = frame.dims;
  const float lo = std::numeric_limits<float>::lowest();
  ViewMaps v;
  v.xy = Eigen::MatrixXf::Constant(d[0], d[1], lo);
  v.yz = Eigen::MatrixXf::Constant(d[1], d[2], lo);
  v.xz = Eigen::MatrixXf::Constant(d[0], d[2], lo);
  for (int i = 0; i < d[0]; ++i)
    for (int j = 0; j < d[1]; ++j)
      for (int k = 0; k < d[2]; ++k) {
        const float x = frame.at(i, j, k);
        v.xy(i, j) = std::max(v.xy(i, j), x);
        v.yz(j, k) = std::max(v.yz(j, k), x);
        v.xz(i, k) = std::max(v.xz(i, k), x);
      }
  return v;
}

ViewTensors project_views(const torch::Tensor& frames) {
  TORCH_CHECK(frames.dim() == 4, "expected (B, X, Y, Z) frames");
  return {std::get<0>(frames.max(3)).unsqueeze(1), std::get<0>(frames.max(1)).unsqueeze(1),
          std::get<0>(frames.max(2)).unsqueeze(1)};
}

Localizer2DImpl::Localizer2DImpl(int w) : width(w) {
  using torch::nn::Conv2dOptions;
  c1 = register_module("c1", torch::nn::Conv2d(Conv2dOptions(3, w, 3).padding(1)));
  c2 = register_module("c2", torch::nn::Conv2d(Conv2dOptions(w, w, 3).padding(1)));
  c3 = register_module("c3", torch::nn::Conv2d(Conv2dOptions(w, w, 3).padding(1)));
  attn = register_module("attn", torch::nn::Conv2d(Conv2dOptions(w, 1, 1)));
  head = register_module("head", torch::nn::Linear(w + 2, 2));
  torch::NoGradGuard ng;
  head->weight.zero_();
  head->bias.zero_();
}

torch::Tensor Localizer2DImpl::forward(const torch::Tensor& view) {
  TORCH_CHECK(view.dim() == 4 && view.size(1) == 1, "localizer expects (B, 1, H, W)");
  const auto b = view.size(0);
  const auto h = view.size(2);
  const auto w = view.size(3);
  const auto opts = view.options();
  const auto rows = torch::arange(h, opts);
  const auto cols = torch::arange(w, opts);
  const auto u = (rows / std::max<double>(1.0, h - 1) * 2.0 - 1.0).view({1, 1, h, 1}).expand({b, 1, h, w});
  const auto v = (cols / std::max<double>(1.0, w - 1) * 2.0 - 1.0).view({1, 1, 1, w}).expand({b, 1, h, w});
  auto f = torch::relu(c1(torch::cat({view, u, v}, 1)));
  f = torch::relu(c2(f));
  f = torch::relu(c3(f));
  const auto p = torch::softmax(attn(f).flatten(1), 1);  // B x HW
  const auto pooled = (f.flatten(2) * p.unsqueeze(1)).sum(-1);
  const auto grid_r = rows.view({h, 1}).expand({h, w}).reshape({1, -1});
  const auto grid_c = cols.view({1, w}).expand({h, w}).reshape({1, -1});
  const auto r = (p * grid_r).sum(1);
  const auto c = (p * grid_c).sum(1);
  const auto rn = r / std::max<double>(1.0, h - 1) * 2.0 - 1.0;
  const auto cn = c / std::max<double>(1.0, w - 1) * 2.0 - 1.0;
  const auto delta = head(torch::cat({pooled, rn.unsqueeze(1), cn.unsqueeze(1)}, 1));
  return torch::stack({r, c}, 1) + delta;
}

double Localizer2DImpl::macs(int h, int w) const {
  const double px = static_cast<double>(h) * w;
  return px * 9.0 * (3.0 * width + 2.0 * width * width) + px * width * 2.0 + (width + 2.0) * 2.0;
}

Vec3 combine_view_coords(const Eigen::Vector2d& xy, const Eigen::Vector2d& yz, const Eigen::Vector2d& xz) {
  return {0.5 * (xy[0] + xz[0]), 0.5 * (xy[1] + yz[0]), 0.5 * (yz[1] + xz[1])};
}

torch::Tensor combine_view_coords(const torch::Tensor& xy, const torch::Tensor& yz, const torch::Tensor& xz) {
  const auto x = 0.5 * (xy.select(1, 0) + xz.select(1, 0));
  const auto y = 0.5 * (xy.select(1, 1) + yz.select(1, 0));
  const auto z = 0.5 * (yz.select(1, 1) + xz.select(1, 1));
  return torch::stack({x, y, z}, 1);
}

Vec3 clamp_voxel_coords(const Vec3& c, const Index3& dims) {
  Vec3 out;
  for (int a = 0; a < 3; ++a) out[a] = std::clamp(c[a], 0.0, static_cast<double>(dims[a] - 1));
  return out;
}

HreModelImpl::HreModelImpl(const HreConfig& c) : cfg(c) {
  for (int a = 0; a < 3; ++a) {
    require(c.roi_dims[a] % 4 == 0, "RoI dimensions must be divisible by 4");
  }
  loc_xy = register_module("loc_xy", Localizer2D(c.loc_width));
  loc_yz = register_module("loc_yz", Localizer2D(c.loc_width));
  loc_xz = register_module("loc_xz", Localizer2D(c.loc_width));
  seg = register_module("seg", UNet3D(1, 1, c.seg_base));
}

torch::Tensor HreModelImpl::localize(const torch::Tensor& frames) {
  TORCH_CHECK(frames.dim() == 4 && frames.size(1) == cfg.grid_dims[0] && frames.size(2) == cfg.grid_dims[1] &&
                  frames.size(3) == cfg.grid_dims[2],
              "frame shape does not match the localizer grid");
  const auto v = project_views(frames);
  return combine_view_coords(loc_xy(v.xy), loc_yz(v.yz), loc_xz(v.xz));
}

torch::Tensor HreModelImpl::segment_logits(const torch::Tensor& crops) { return seg(crops); }

double HreModelImpl::macs() const {
  const Index3 g = cfg.grid_dims;
  return loc_xy->macs(g[0], g[1]) + loc_yz->macs(g[1], g[2]) + loc_xz->macs(g[0], g[2]) +
         seg->encoder_macs(cfg.roi_dims) + seg->decoder_macs(cfg.roi_dims);
}

CoarseCenter coarse_localize(const FloatVolume& frame, const GridSpec& grid, HreModel& model) {
  if (frame.dims != grid.dims || frame.dims != model->cfg.grid_dims) {
    throw ContractViolation("frame shape does not match the localizer grid");
  }
  torch::NoGradGuard ng;
  const auto p = model->localize(volume_to_tensor(frame).unsqueeze(0).to(model->seg->head->weight.dtype()))
                     .to(torch::kFloat64)
                     .contiguous();
  const Vec3 c(p[0][0].item<double>(), p[0][1].item<double>(), p[0][2].item<double>());
  return {grid.from_voxel_coords(clamp_voxel_coords(c, grid.dims))};
}

RoiVolume crop_roi_at(const FloatVolume& frame, const GridSpec& grid, const Index3& origin, const Index3& roi_dims) {
  require(frame.dims == grid.dims, "frame does not match grid");
  for (int a = 0; a < 3; ++a) {
    require(origin[a] >= 0 && origin[a] + roi_dims[a] <= grid.dims[a], "RoI leaves the grid");
  }
  RoiVolume r;
  r.values = FloatVolume(roi_dims);
  r.roi_origin_voxel = origin;
  r.grid = grid;
  for (int i = 0; i < roi_dims[0]; ++i)
    for (int j = 0; j < roi_dims[1]; ++j) {
      const float* src = &frame.at(origin[0] + i, origin[1] + j, origin[2]);
      std::copy(src, src + roi_dims[2], &r.values.at(i, j, 0));
    }
  return r;
}

RoiVolume crop_roi(const FloatVolume& frame, const GridSpec& grid, const Vec3& center, const Index3& roi_dims) {
  Index3 cv = grid.raw_index(center);
  for (int a = 0; a < 3; ++a) cv[a] = std::clamp(cv[a], 0, grid.dims[a] - 1);
  const Index3 origin = roi_origin_for(grid, cv, roi_dims);
  RoiVolume r = crop_roi_at(frame, grid, origin, roi_dims);
  for (int a = 0; a < 3; ++a) r.shifted = r.shifted || origin[a] != cv[a] - roi_dims[a] / 2;
  return r;
}

Volume<std::uint8_t> crop_occupancy(const Volume<std::uint8_t>& occ, const Index3& origin, const Index3& roi_dims) {
  Volume<std::uint8_t> out(roi_dims);
  for (int i = 0; i < roi_dims[0]; ++i)
    for (int j = 0; j < roi_dims[1]; ++j)
      for (int k = 0; k < roi_dims[2]; ++k) out.at(i, j, k) = occ.at(origin[0] + i, origin[1] + j, origin[2] + k);
  return out;
}

ReflectionVolume segment_voxels(const RoiVolume& roi, HreModel& model) {
  if (roi.values.dims != model->cfg.roi_dims) throw ContractViolation("RoI shape does not match the segmenter");
  torch::NoGradGuard ng;
  const auto x = volume_to_tensor(roi.values).to(model->seg->head->weight.dtype()).unsqueeze(0).unsqueeze(0);
  const auto probs = torch::sigmoid(model->segment_logits(x))[0][0];
  return {tensor_to_volume(probs), roi.roi_origin_voxel, roi.values, roi.grid};
}

torch::Tensor loc_loss(const torch::Tensor& p_hat, const torch::Tensor& p_gt) {
  TORCH_CHECK(p_hat.sizes() == p_gt.sizes(), "loc_loss shape mismatch");
  return (p_hat - p_gt).pow(2).sum(-1);
}

SegLoss seg_loss(const torch::Tensor& probs, const torch::Tensor& gt, double pos_weight, bool use_dice, double eps) {
  if (probs.sizes() != gt.sizes()) throw ContractViolation("seg_loss shape mismatch");
  const auto g = gt.to(probs.dtype());
  const auto r = probs.clamp(kProbClamp, 1.0 - kProbClamp);
  const auto bce = -(pos_weight * g * torch::log(r) + (1.0 - g) * torch::log(1.0 - r)).mean();
  torch::Tensor dice = torch::zeros({}, probs.options());
  if (use_dice) {
    const auto rb = probs.reshape({probs.dim() > 3 ? probs.size(0) : 1, -1});
    const auto gb = g.reshape_as(rb);
    dice = (1.0 - (2.0 * (rb * gb).sum(1) + eps) / (rb.sum(1) + gb.sum(1) + eps)).mean();
  }
  return {bce + dice, bce, dice};
}

torch::Tensor hre_loss(const torch::Tensor& loc, const torch::Tensor& seg, double lambda_seg) {
  return loc + lambda_seg * seg;
}

CfarDetections cfar_extract(const FloatVolume& frame, const GridSpec& grid, const Index3& guard, const Index3& train,
                            double rate) {
  require(rate > 0.0, "CFAR rate must be positive");
  for (int a = 0; a < 3; ++a) {
    require(guard[a] >= 0 && guard[a] < train[a], "CFAR guard must be smaller than the training window");
  }
  require(frame.dims == grid.dims, "frame does not match grid");
  const Index3 d = frame.dims;
  const Index3 s{d[0] + 1, d[1] + 1, d[2] + 1};
  std::vector<double> sat(static_cast<std::size_t>(s[0]) * s[1] * s[2], 0.0);
  auto sidx = [&](int i, int j, int k) { return (static_cast<std::size_t>(i) * s[1] + j) * s[2] + k; };
  for (int i = 1; i <= d[0]; ++i)
    for (int j = 1; j <= d[1]; ++j)
      for (int k = 1; k <= d[2]; ++k) {
        sat[sidx(i, j, k)] = frame.at(i - 1, j - 1, k - 1) + sat[sidx(i - 1, j, k)] + sat[sidx(i, j - 1, k)] +
                             sat[sidx(i, j, k - 1)] - sat[sidx(i - 1, j - 1, k)] - sat[sidx(i - 1, j, k - 1)] -
                             sat[sidx(i, j - 1, k - 1)] + sat[sidx(i - 1, j - 1, k - 1)];
      }
  // Sum and count of the clamped box [c - h, c + h].
  auto box = [&](const Index3& c, const Index3& h, double& sum, double& count) {
    Index3 lo{}, hi{};
    count = 1.0;
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::max(0, c[a] - h[a]);
      hi[a] = std::min(d[a] - 1, c[a] + h[a]) + 1;
      count *= hi[a] - lo[a];
    }
    sum = sat[sidx(hi[0], hi[1], hi[2])] - sat[sidx(lo[0], hi[1], hi[2])] - sat[sidx(hi[0], lo[1], hi[2])] -
          sat[sidx(hi[0], hi[1], lo[2])] + sat[sidx(lo[0], lo[1], hi[2])] + sat[sidx(lo[0], hi[1], lo[2])] +
          sat[sidx(hi[0], lo[1], lo[2])] - sat[sidx(lo[0], lo[1], lo[2])];
  };
  CfarDetections out;
  std::vector<Vec3> pts;
  for (int i = 0; i < d[0]; ++i)
    for (int j = 0; j < d[1]; ++j)
      for (int k = 0; k < d[2]; ++k) {
        const Index3 c{i, j, k};
        double ts = 0, tc = 0, gs = 0, gc = 0;
        box(c, train, ts, tc);
        box(c, guard, gs, gc);
        const double n = tc - gc;
        if (n <= 0.0) continue;
        const double mean = (ts - gs) / n;
        const double x = frame.at(c);
        if (x > rate * mean) {
          pts.push_back(grid.center_of(c));
          out.intensities.push_back(x);
          out.voxels.push_back(c);
        }
      }
  out.points.resize(static_cast<Eigen::Index>(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) out.points.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
  return out;
}

std::vector<ReflectionVolume> extract(const std::vector<FloatVolume>& frames, const GridSpec& grid, HreModel& model) {
  require(!frames.empty(), "extract needs at least one frame");
  const CoarseCenter c = coarse_localize(frames.back(), grid, model);
  const RoiVolume anchor = crop_roi(frames.back(), grid, c.p_hat, model->cfg.roi_dims);
  torch::NoGradGuard ng;
  std::vector<torch::Tensor> crops;
  std::vector<RoiVolume> rois;
  for (const auto& f : frames) {
    rois.push_back(crop_roi_at(f, grid, anchor.roi_origin_voxel, model->cfg.roi_dims));
    crops.push_back(volume_to_tensor(rois.back().values));
  }
  const auto x = torch::stack(crops).unsqueeze(1).to(model->seg->head->weight.dtype());
  const auto probs = torch::sigmoid(model->segment_logits(x));
  std::vector<ReflectionVolume> out;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    out.push_back({tensor_to_volume(probs[static_cast<long>(t)][0]), anchor.roi_origin_voxel, rois[t].values, grid});
  }
  return out;
}

double dice_score(const FloatVolume& probs, const Volume<std::uint8_t>& gt, double threshold) {
  require(probs.dims == gt.dims, "dice shape mismatch");
  double inter = 0, a = 0, b = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = probs.data[i] >= threshold ? 1.0 : 0.0;
    const double g = gt.data[i] ? 1.0 : 0.0;
    inter += p * g;
    a += p;
    b += g;
  }
  return (2.0 * inter + kDiceEps) / (a + b + kDiceEps);
}

}  // namespace radarmesh
