// SPDX-License-Identifier: Apache-2.0
#include "radarmesh/mmr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "radarmesh/errors.hpp"
#include "radarmesh/rng.hpp"

namespace radarmesh {

using torch::indexing::Slice;
using nlohmann::json;

MmrConfig MmrConfig::full() { return MmrConfig{}; }

MmrConfig MmrConfig::tiny() {
  MmrConfig c;
  c.k = 128;
  c.d_s = 64;
  c.roi_dims = {16, 16, 12};
  c.sa1_points = 64;
  c.sa1_samples = 16;
  c.sa1_radius = 0.4;
  c.sa1_mlp = {32, 32, 64};
  c.sa2_points = 16;
  c.sa2_samples = 16;
  c.sa2_radius = 0.8;
  c.sa2_mlp = {64, 64, 128};
  c.global_mlp = {128, 256};
  c.motion_base = 8;
  c.ffn = 256;
  c.head_hidden = 256;
  return c;
}

json MmrConfig::to_json() const {
  return {{"k", k},
          {"d_s", d_s},
          {"window", window},
          {"roi_dims", roi_dims},
          {"sa1_points", sa1_points},
          {"sa1_samples", sa1_samples},
          {"sa1_radius", sa1_radius},
          {"sa1_mlp", sa1_mlp},
          {"sa2_points", sa2_points},
          {"sa2_samples", sa2_samples},
          {"sa2_radius", sa2_radius},
          {"sa2_mlp", sa2_mlp},
          {"global_mlp", global_mlp},
          {"motion_base", motion_base},
          {"heads", heads},
          {"layers", layers},
          {"ffn", ffn},
          {"head_hidden", head_hidden}};
}

MmrConfig MmrConfig::from_json(const json& j) {
  MmrConfig c;
  j.at("k").get_to(c.k);
  j.at("d_s").get_to(c.d_s);
  j.at("window").get_to(c.window);
  j.at("roi_dims").get_to(c.roi_dims);
  j.at("sa1_points").get_to(c.sa1_points);
  j.at("sa1_samples").get_to(c.sa1_samples);
  j.at("sa1_radius").get_to(c.sa1_radius);
  j.at("sa1_mlp").get_to(c.sa1_mlp);
  j.at("sa2_points").get_to(c.sa2_points);
  j.at("sa2_samples").get_to(c.sa2_samples);
  j.at("sa2_radius").get_to(c.sa2_radius);
  j.at("sa2_mlp").get_to(c.sa2_mlp);
  j.at("global_mlp").get_to(c.global_mlp);
  j.at("motion_base").get_to(c.motion_base);
  j.at("heads").get_to(c.heads);
  j.at("layers").get_to(c.layers);
  j.at("ffn").get_to(c.ffn);
  j.at("head_hidden").get_to(c.head_hidden);
  if (c.k <= 0 || c.d_s <= 0 || c.window < 2 || c.sa1_points > c.k || c.sa2_points > c.sa1_points ||
      c.d_s % c.heads != 0) {
    throw ConfigError("inconsistent stage-2 architecture");
  }
  return c;
}

PointSet5 select_topk_points(const ReflectionVolume& r, int k) {
  const std::size_t n = r.probs.size();
  require(k > 0 && static_cast<std::size_t>(k) <= n, "K exceeds the number of RoI voxels");
  require(r.source_intensity.dims == r.probs.dims, "intensity and probability volumes differ in shape");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  const auto& p = r.probs.data;
  const auto& x = r.source_intensity.data;
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](std::size_t a, std::size_t b) {
    if (p[a] != p[b]) return p[a] > p[b];
    if (x[a] != x[b]) return x[a] > x[b];
    return a < b;
  });
  const GridSpec g = r.roi_grid();
  PointSet5 out;
  out.points.resize(k, 5);
  for (int i = 0; i < k; ++i) {
    const Vec3 c = g.center_of(g.unlinear(idx[i]));
    out.points.row(i) << c[0], c[1], c[2], x[idx[i]], p[idx[i]];
  }
  return out;
}

PointSet5 select_cfar_points(const CfarDetections& d, const FloatVolume& frame, const GridSpec& grid, int k) {
  require(k > 0, "K must be positive");
  struct Cand {
    Vec3 p;
    double x;
    std::size_t lin;
  };
  std::vector<Cand> c;
  for (std::size_t i = 0; i < d.voxels.size(); ++i) {
    c.push_back({d.points.row(static_cast<Eigen::Index>(i)).transpose(), d.intensities[i], grid.linear(d.voxels[i])});
  }
  if (c.empty()) {
    require(static_cast<std::size_t>(k) <= frame.size(), "K exceeds the number of voxels");
    std::vector<std::size_t> idx(frame.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](std::size_t a, std::size_t b) {
      if (frame.data[a] != frame.data[b]) return frame.data[a] > frame.data[b];
      return a < b;
    });
    for (int i = 0; i < k; ++i) c.push_back({grid.center_of(grid.unlinear(idx[i])), frame.data[idx[i]], idx[i]});
  }
  std::sort(c.begin(), c.end(), [](const Cand& a, const Cand& b) {
    if (a.x != b.x) return a.x > b.x;
    return a.lin < b.lin;
  });
  PointSet5 out;
  out.points.resize(k, 5);
  for (int i = 0; i < k; ++i) {
    const Cand& s = c[static_cast<std::size_t>(i) % c.size()];
    out.points.row(i) << s.p[0], s.p[1], s.p[2], s.x, 1.0;
  }
  return out;
}

void canonicalize(PointSet5& ps) {
  std::vector<int> idx(static_cast<std::size_t>(ps.size()));
  std::iota(idx.begin(), idx.end(), 0);
  const auto& m = ps.points;
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (m(a, 4) != m(b, 4)) return m(a, 4) > m(b, 4);
    if (m(a, 3) != m(b, 3)) return m(a, 3) > m(b, 3);
    for (int c = 0; c < 3; ++c) {
      if (m(a, c) != m(b, c)) return m(a, c) < m(b, c);
    }
    return false;
  });
  decltype(ps.points) out(m.rows(), 5);
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
  ps.points = std::move(out);
}

Vec3 point_centroid(const PointSet5& ps) {
  require(ps.size() > 0, "empty point set");
  const auto w = ps.points.col(4);
  const double sw = w.sum();
  if (sw > 0.0) return (ps.points.leftCols<3>().transpose() * w) / sw;
  return ps.points.leftCols<3>().colwise().mean().transpose();
}

std::vector<int> farthest_point_sampling(const Points& xyz, int n) {
  const int m = static_cast<int>(xyz.rows());
  require(n > 0 && n <= m, "cannot sample more points than available");
  std::vector<int> out;
  out.reserve(n);
  const std::uint64_t h = fnv1a(xyz.data(), sizeof(double) * static_cast<std::size_t>(xyz.size()));
  int cur = static_cast<int>(h % static_cast<std::uint64_t>(m));
  std::vector<double> dist(m, std::numeric_limits<double>::infinity());
  for (int s = 0; s < n; ++s) {
    out.push_back(cur);
    int best = 0;
    double best_d = -1.0;
    for (int i = 0; i < m; ++i) {
      dist[i] = std::min(dist[i], (xyz.row(i) - xyz.row(cur)).squaredNorm());
      if (dist[i] > best_d) {
        best_d = dist[i];
        best = i;
      }
    }
    cur = best;
  }
  return out;
}

std::vector<int> ball_query(const Points& xyz, const Points& centers, double radius, int n) {
  require(n > 0 && radius > 0.0 && xyz.rows() > 0, "bad ball query");
  const double r2 = radius * radius;
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(centers.rows()) * n);
  for (Eigen::Index c = 0; c < centers.rows(); ++c) {
    const std::size_t start = out.size();
    int nearest = 0;
    double nearest_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < xyz.rows() && out.size() - start < static_cast<std::size_t>(n); ++i) {
      const double d = (xyz.row(i) - centers.row(c)).squaredNorm();
      if (d <= r2) out.push_back(static_cast<int>(i));
      if (d < nearest_d) {
        nearest_d = d;
        nearest = static_cast<int>(i);
      }
    }
    if (out.size() == start) out.push_back(nearest);
    const int first = out[start];
    while (out.size() - start < static_cast<std::size_t>(n)) out.push_back(first);
  }
  return out;
}

namespace {

Points take_rows(const Points& xyz, const std::vector<int>& idx) {
  Points out(static_cast<Eigen::Index>(idx.size()), 3);
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = xyz.row(idx[i]);
  return out;
}

torch::Tensor index_tensor(const std::vector<std::vector<int>>& rows, std::vector<std::int64_t> shape) {
  std::vector<std::int64_t> flat;
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  return torch::tensor(flat, torch::kInt64).reshape(shape);
}

// x (N, P, C), idx (N, ...) -> (N, ..., C)
torch::Tensor gather_points(const torch::Tensor& x, const torch::Tensor& idx) {
  const auto n = x.size(0);
  const auto c = x.size(2);
  const auto flat = idx.reshape({n, -1});
  auto out = x.gather(1, flat.unsqueeze(-1).expand({n, flat.size(1), c}));
  auto shape = idx.sizes().vec();
  shape.push_back(c);
  return out.reshape(shape);
}

// He-normal weights, zero bias. The default init shrinks activations at
// every ReLU layer and the stacked point MLPs then emit near-constant tokens.
void he_init(Mlp& mlp) {
  torch::NoGradGuard ng;
  for (auto& m : *mlp->layers) {
    auto* lin = m->as<torch::nn::Linear>();
    torch::nn::init::kaiming_normal_(lin->weight, 0.0, torch::kFanIn, torch::kReLU);
    lin->bias.zero_();
  }
}

}  // namespace

GroupingPlan plan_grouping(const Points& xyz, const MmrConfig& cfg) {
  GroupingPlan p;
  p.fps1 = farthest_point_sampling(xyz, cfg.sa1_points);
  const Points c1 = take_rows(xyz, p.fps1);
  p.ball1 = ball_query(xyz, c1, cfg.sa1_radius, cfg.sa1_samples);
  p.fps2 = farthest_point_sampling(c1, cfg.sa2_points);
  p.ball2 = ball_query(c1, take_rows(c1, p.fps2), cfg.sa2_radius, cfg.sa2_samples);
  return p;
}

PlanTensors PlanTensors::stack(const std::vector<GroupingPlan>& plans, const MmrConfig& cfg) {
  std::vector<std::vector<int>> f1, b1, f2, b2;
  for (const auto& p : plans) {
    require(static_cast<int>(p.fps1.size()) == cfg.sa1_points &&
                static_cast<int>(p.ball1.size()) == cfg.sa1_points * cfg.sa1_samples &&
                static_cast<int>(p.fps2.size()) == cfg.sa2_points &&
                static_cast<int>(p.ball2.size()) == cfg.sa2_points * cfg.sa2_samples,
            "grouping plan does not match the architecture");
    f1.push_back(p.fps1);
    b1.push_back(p.ball1);
    f2.push_back(p.fps2);
    b2.push_back(p.ball2);
  }
  const auto n = static_cast<std::int64_t>(plans.size());
  return {index_tensor(f1, {n, cfg.sa1_points}), index_tensor(b1, {n, cfg.sa1_points, cfg.sa1_samples}),
          index_tensor(f2, {n, cfg.sa2_points}), index_tensor(b2, {n, cfg.sa2_points, cfg.sa2_samples})};
}

PointNetEncoderImpl::PointNetEncoderImpl(int in_feat, const MmrConfig& c) : in_features(in_feat), cfg(c) {
  require(in_feat >= 3, "points need xyz");
  std::vector<int> w1{in_feat};
  w1.insert(w1.end(), c.sa1_mlp.begin(), c.sa1_mlp.end());
  std::vector<int> w2{3 + c.sa1_mlp.back()};
  w2.insert(w2.end(), c.sa2_mlp.begin(), c.sa2_mlp.end());
  std::vector<int> wg{3 + c.sa2_mlp.back()};
  wg.insert(wg.end(), c.global_mlp.begin(), c.global_mlp.end());
  sa1 = register_module("sa1", Mlp(w1, true));
  sa2 = register_module("sa2", Mlp(w2, true));
  glob = register_module("glob", Mlp(wg, true));
  proj = register_module("proj", torch::nn::Linear(c.global_mlp.back(), c.d_s));
  he_init(sa1);
  he_init(sa2);
  he_init(glob);
}

torch::Tensor PointNetEncoderImpl::forward(const torch::Tensor& points, const PlanTensors& plan) {
  require(points.dim() == 3 && points.size(2) == in_features, "point tensor has the wrong feature width");
  require(plan.fps1.size(0) == points.size(0), "plan and point batch differ");
  const auto xyz = points.index({Slice(), Slice(), Slice(0, 3)});
  const auto c1 = gather_points(xyz, plan.fps1);
  auto g1 = gather_points(points, plan.ball1);
  // local offsets in units of the ball radius
  g1 = torch::cat({(g1.index({"...", Slice(0, 3)}) - c1.unsqueeze(2)) / cfg.sa1_radius, g1.index({"...", Slice(3, torch::indexing::None)})}, -1);
  const auto f1 = std::get<0>(sa1->forward(g1).max(2));
  const auto c2 = gather_points(c1, plan.fps2);
  auto g2 = gather_points(torch::cat({c1, f1}, -1), plan.ball2);
  g2 = torch::cat({(g2.index({"...", Slice(0, 3)}) - c2.unsqueeze(2)) / cfg.sa2_radius, g2.index({"...", Slice(3, torch::indexing::None)})}, -1);
  const auto f2 = std::get<0>(sa2->forward(g2).max(2));
  const auto g = std::get<0>(glob->forward(torch::cat({c2, f2}, -1)).max(1));
  return proj->forward(g);
}

double PointNetEncoderImpl::macs() const {
  return sa1->macs_per_row() * cfg.sa1_points * cfg.sa1_samples +
         sa2->macs_per_row() * cfg.sa2_points * cfg.sa2_samples + glob->macs_per_row() * cfg.sa2_points +
         static_cast<double>(cfg.global_mlp.back()) * cfg.d_s;
}

DifferenceVolume difference_volume(const std::vector<ReflectionVolume>& v) {
  require(v.size() >= 2, "difference volume needs at least two frames");
  const auto& last = v.back();
  DifferenceVolume out;
  out.roi_origin_voxel = last.roi_origin_voxel;
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    require(v[i].roi_origin_voxel == last.roi_origin_voxel && v[i].probs.dims == last.probs.dims &&
                v[i].grid == last.grid,
            "reflection volumes are not on a shared RoI");
    FloatVolume d(last.probs.dims);
    for (std::size_t j = 0; j < d.size(); ++j) d.data[j] = last.probs.data[j] - v[i].probs.data[j];
    out.channels.push_back(std::move(d));
  }
  return out;
}

torch::Tensor difference_volume(const torch::Tensor& volumes) {
  require(volumes.dim() >= 2 && volumes.size(1) >= 2, "difference volume needs at least two frames");
  const auto t = volumes.size(1);
  return volumes.index({Slice(), Slice(t - 1, t)}) - volumes.index({Slice(), Slice(0, t - 1)});
}

MotionNetImpl::MotionNetImpl(int in_channels, int base, int d_s) {
  unet = register_module("unet", UNet3D(in_channels, 3, base));
  token = register_module("token", torch::nn::Linear(4 * base, d_s));
}

MotionNetImpl::Output MotionNetImpl::forward(const torch::Tensor& diff) {
  require(diff.dim() == 5 && diff.size(1) == unet->in_ch, "difference volume has the wrong channel count");
  auto enc = unet->encode(diff);
  Output out;
  out.token = token->forward(enc.bottom.mean({2, 3, 4}));
  if (is_training()) out.flow = unet->decode(enc);
  return out;
}

double MotionNetImpl::macs(const Index3& roi, bool with_decoder) const {
  double m = unet->encoder_macs(roi) + static_cast<double>(4 * unet->base) * token->options.out_features();
  if (with_decoder) m += unet->decoder_macs(roi);
  return m;
}

SelfAttentionImpl::SelfAttentionImpl(int d_, int h) : d(d_), heads(h) {
  require(h > 0 && d_ % h == 0, "width must be divisible by the head count");
  qkv = register_module("qkv", torch::nn::Linear(d_, 3 * d_));
  out = register_module("out", torch::nn::Linear(d_, d_));
}

std::pair<torch::Tensor, torch::Tensor> SelfAttentionImpl::forward(const torch::Tensor& x) {
  require(x.dim() == 3 && x.size(2) == d, "attention input width mismatch");
  const auto b = x.size(0);
  const auto l = x.size(1);
  const int dh = d / heads;
  const auto q = qkv->forward(x).view({b, l, 3, heads, dh}).permute({2, 0, 3, 1, 4});
  const auto scores = torch::matmul(q[0], q[1].transpose(-2, -1)) / std::sqrt(static_cast<double>(dh));
  const auto w = torch::softmax(scores, -1);
  const auto y = torch::matmul(w, q[2]).transpose(1, 2).reshape({b, l, d});
  return {out->forward(y), w};
}

FusionBlockImpl::FusionBlockImpl(int d, int heads, int ffn) {
  ln1 = register_module("ln1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
  attn = register_module("attn", SelfAttention(d, heads));
  ln2 = register_module("ln2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
  fc1 = register_module("fc1", torch::nn::Linear(d, ffn));
  fc2 = register_module("fc2", torch::nn::Linear(ffn, d));
}

torch::Tensor FusionBlockImpl::forward(const torch::Tensor& x, torch::Tensor* weights) {
  auto [a, w] = attn->forward(ln1->forward(x));
  if (weights != nullptr) *weights = w;
  auto h = x + a;
  return h + fc2->forward(torch::relu(fc1->forward(ln2->forward(h))));
}

FusionImpl::FusionImpl(int d_, int layers, int heads, int ffn_, int seq_len_) : d(d_), seq_len(seq_len_), ffn(ffn_) {
  pos = register_parameter("pos", torch::randn({seq_len_, d_}) * 0.02);
  blocks = register_module("blocks", torch::nn::ModuleList());
  for (int i = 0; i < layers; ++i) blocks->push_back(FusionBlock(d_, heads, ffn_));
  ln_f = register_module("ln_f", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d_})));
}

torch::Tensor FusionImpl::forward(const torch::Tensor& z_m, const torch::Tensor& tokens) {
  return forward_with(z_m, tokens, pos);
}

torch::Tensor FusionImpl::forward_with(const torch::Tensor& z_m, const torch::Tensor& tokens, const torch::Tensor& p) {
  require(z_m.dim() == 2 && tokens.dim() == 3 && z_m.size(1) == d && tokens.size(2) == d,
          "motion token and shape tokens must share the fusion width");
  require(z_m.size(0) == tokens.size(0), "motion and shape batches differ");
  require(tokens.size(1) + 1 == seq_len, "shape-token count does not match the window");
  auto x = torch::cat({z_m.unsqueeze(1), tokens}, 1) + p;
  last_weights.clear();
  for (const auto& m : *blocks) {
    torch::Tensor w;
    x = m->as<FusionBlock>()->forward(x, &w);
    last_weights.push_back(w.detach());
  }
  return ln_f->forward(x).index({Slice(), 0});
}

double FusionImpl::macs() const {
  const double l = seq_len;
  const double per_layer = l * d * 3.0 * d + 2.0 * l * l * d + l * d * d + 2.0 * l * d * ffn;
  return per_layer * static_cast<double>(blocks->size());
}

RegressionHeadImpl::RegressionHeadImpl(int d, int hidden) {
  fc1 = register_module("fc1", torch::nn::Linear(d, hidden));
  fc2 = register_module("fc2", torch::nn::Linear(hidden, kHeadOutputs));
  torch::NoGradGuard ng;
  fc2->weight.mul_(0.01);
  fc2->bias.zero_();
}

torch::Tensor RegressionHeadImpl::forward(const torch::Tensor& x) {
  return fc2->forward(torch::relu(fc1->forward(x)));
}

HeadDecoded decode_head(const torch::Tensor& raw, const torch::Tensor& center) {
  require(raw.dim() == 2 && raw.size(1) == kHeadOutputs, "head output must have 83 columns");
  require(center.dim() == 2 && center.size(1) == 3 && center.size(0) == raw.size(0), "center shape mismatch");
  HeadDecoded d;
  d.params = torch::cat({raw.index({Slice(), Slice(0, 13)}), center + raw.index({Slice(), Slice(13, 16)}),
                         raw.index({Slice(), Slice(16, 82)})},
                        1);
  d.g = torch::sigmoid(raw.index({Slice(), 82}));
  return d;
}

MmrModelImpl::MmrModelImpl(const MmrConfig& c) : cfg(c) {
  shape = register_module("shape", PointNetEncoder(5, c));
  motion = register_module("motion", MotionNet(c.window - 1, c.motion_base, c.d_s));
  motion_const = register_parameter("motion_const", torch::zeros({c.d_s}));
  fusion = register_module("fusion", Fusion(c.d_s, c.layers, c.heads, c.ffn, c.window + 1));
  head = register_module("head", RegressionHead(c.d_s, c.head_hidden));
}

MmrOutput MmrModelImpl::forward(const MmrBatch& b, bool motion_on) {
  require(b.points.dim() == 4 && b.points.size(1) == cfg.window && b.points.size(3) == 5,
          "points must be (B, T, K, 5)");
  const auto bs = b.points.size(0);
  const auto t = b.points.size(1);
  MmrOutput out;
  out.shape_tokens = shape->forward(b.points.reshape({bs * t, b.points.size(2), 5}), b.plan).view({bs, t, cfg.d_s});
  torch::Tensor z_m;
  if (motion_on) {
    auto m = motion->forward(b.diff);
    z_m = m.token;
    out.flow = m.flow;
  } else {
    z_m = motion_const.unsqueeze(0).expand({bs, cfg.d_s});
  }
  const auto fused = fusion->forward(z_m, out.shape_tokens);
  const auto dec = decode_head(head->forward(fused), b.centers.index({Slice(), t - 1}));
  out.params = dec.params;
  out.g = dec.g;
  return out;
}

double MmrModelImpl::macs() const {
  return cfg.window * shape->macs() + motion->macs(cfg.roi_dims, false) + fusion->macs() +
         static_cast<double>(cfg.d_s) * cfg.head_hidden + static_cast<double>(cfg.head_hidden) * kHeadOutputs;
}

TeacherImpl::TeacherImpl(const MmrConfig& c) : cfg(c) {
  encoder = register_module("encoder", PointNetEncoder(3, c));
  head = register_module("head", RegressionHead(c.d_s, c.head_hidden));
}

TeacherImpl::Output TeacherImpl::forward(const torch::Tensor& points, const PlanTensors& plan,
                                         const torch::Tensor& centers) {
  Output o;
  o.token = encoder->forward(points, plan);
  const auto dec = decode_head(head->forward(o.token), centers);
  o.params = dec.params;
  o.g = dec.g;
  return o;
}

torch::Tensor shape_distill_loss(const torch::Tensor& student, const torch::Tensor& teacher) {
  require(student.sizes() == teacher.sizes() && student.dim() == 3, "shape tokens must be (B, T, d) on both sides");
  return (student - teacher.detach()).pow(2).sum(-1).mean();
}

torch::Tensor motion_loss(const torch::Tensor& f_hat, const torch::Tensor& f_gt, bool occupied_only) {
  require(f_hat.sizes() == f_gt.sizes() && f_hat.dim() == 5 && f_hat.size(1) == 3,
          "flow prediction and target must both be (B, 3, X, Y, Z)");
  const auto sq = (f_hat - f_gt).pow(2);
  if (!occupied_only) return sq.mean();
  const auto mask = (f_gt.abs().sum(1, true) > 0).to(sq.dtype()).expand_as(sq);
  const auto n = mask.sum();
  return (sq * mask).sum() / torch::clamp_min(n, 1.0);
}

SmplLoss smpl_loss(const torch::Tensor& pred, const torch::Tensor& pred_g, const torch::Tensor& gt,
                   const torch::Tensor& gt_g, const BodyLayer& body) {
  require(pred.dim() == 2 && pred.size(1) == kNumContinuousParams && pred.sizes() == gt.sizes(),
          "parameter tensors must be (B, 82)");
  require(pred_g.dim() == 1 && pred_g.size(0) == pred.size(0) && gt_g.sizes() == pred_g.sizes(),
          "gender tensors must be (B,)");
  const auto p = ParamTensors::split(pred);
  const auto g = ParamTensors::split(gt);
  SmplLoss l;
  l.theta = torch::mse_loss(p.theta, g.theta);
  l.alpha = torch::mse_loss(p.alpha, g.alpha);
  l.beta = torch::mse_loss(p.beta, g.beta);
  l.tau = torch::mse_loss(p.tau, g.tau);
  const auto gender = (gt_g > 0.5).to(torch::kInt64);
  const auto jp = body.forward(ParamTensors::split(pred.to(body.dtype())), gender).joints;
  const auto jg = body.forward(ParamTensors::split(gt.to(body.dtype())), gender).joints;
  l.joints = (jp - jg.detach()).pow(2).sum(-1).mean().to(pred.dtype());
  const auto q = torch::clamp(pred_g, kProbClamp, 1.0 - kProbClamp);
  const auto y = gt_g.to(q.dtype());
  l.gender = -(y * torch::log(q) + (1 - y) * torch::log(1 - q)).mean();
  l.total = l.theta + l.alpha + l.beta + l.tau + kJointWeight * l.joints + kGenderWeight * l.gender;
  return l;
}

torch::Tensor mmr_loss(const torch::Tensor& smpl, const std::optional<torch::Tensor>& shape,
                       const std::optional<torch::Tensor>& motion, const MmrLossWeights& w) {
  auto total = smpl;
  if (!w.distill_off) {
    require(shape.has_value(), "distillation term missing");
    total = total + w.lambda_shape * *shape;
  }
  if (!w.motion_off) {
    require(motion.has_value(), "motion term missing");
    total = total + w.lambda_motion * *motion;
  }
  return total;
}

BodyParams params_from_row(const torch::Tensor& params, double g) {
  const auto r = params.detach().to(torch::kCPU, torch::kFloat64).contiguous().reshape({-1});
  require(r.size(0) == kNumContinuousParams, "parameter row must have 82 values");
  std::vector<double> v(r.data_ptr<double>(), r.data_ptr<double>() + kNumContinuousParams);
  v.push_back(g);
  return BodyParams::from_vector(v);
}

}  // namespace radarmesh
