// SPDX-License-Identifier: Apache-2.0
#include "radarmesh/body_layer.hpp"

#include <vector>

namespace radarmesh {

torch::Tensor axis_angle_to_matrix(const torch::Tensor& aa) {
  const auto t2 = (aa * aa).sum(-1, true).unsqueeze(-1);  // (..., 1, 1)
  const auto small = t2 < 1e-8;
  const auto safe_t2 = torch::where(small, torch::ones_like(t2), t2);
  const auto t = torch::sqrt(safe_t2);
  const auto a = torch::where(small, 1.0 - t2 / 6.0, torch::sin(t) / t);
  const auto b = torch::where(small, 0.5 - t2 / 24.0, (1.0 - torch::cos(t)) / safe_t2);

  const auto x = aa.select(-1, 0);
  const auto y = aa.select(-1, 1);
  const auto z = aa.select(-1, 2);
  const auto zero = torch::zeros_like(x);
  std::vector<int64_t> shape = aa.sizes().vec();
  shape.back() = 3;
  shape.push_back(3);
  const auto k = torch::stack({zero, -z, y, z, zero, -x, -y, x, zero}, -1).reshape(shape);
  const auto eye = torch::eye(3, aa.options()).expand(shape);
  return eye + a * k + b * torch::matmul(k, k);
}

ParamTensors ParamTensors::split(const torch::Tensor& flat) {
  TORCH_CHECK(flat.dim() == 2 && flat.size(1) >= kNumContinuousParams,
              "expected B x 82 parameter tensor");
  ParamTensors p;
  p.alpha = flat.slice(1, 0, 3);
  p.beta = flat.slice(1, 3, 3 + kNumBetas);
  p.tau = flat.slice(1, 3 + kNumBetas, 6 + kNumBetas);
  p.theta = flat.slice(1, 6 + kNumBetas, kNumContinuousParams).reshape({-1, kNumJoints, 3});
  return p;
}

torch::Tensor ParamTensors::flat() const {
  return torch::cat({alpha, beta, tau, theta.reshape({theta.size(0), -1})}, 1);
}

namespace {

torch::Tensor to_tensor(const Eigen::MatrixXd& m, torch::Dtype dtype) {
  auto t = torch::empty({m.rows(), m.cols()}, torch::kFloat64);
  auto acc = t.accessor<double, 2>();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) acc[r][c] = m(r, c);
  }
  return t.to(dtype);
}

}  // namespace

BodyLayer::BodyLayer(const BodyModel& model, torch::Dtype dtype) : dtype_(dtype) {
  std::vector<torch::Tensor> rest;
  std::vector<torch::Tensor> basis;
  std::vector<torch::Tensor> jrest;
  std::vector<torch::Tensor> jbasis;
  for (const TemplateBody* tpl : {&model.female, &model.male}) {
    const auto n = tpl->num_vertices();
    rest.push_back(to_tensor(tpl->rest_vertices, dtype));
    basis.push_back(to_tensor(tpl->shape_basis, dtype).reshape({n, 3, kNumBetas}));
    jrest.push_back(to_tensor(tpl->joint_rest_positions, dtype));
    jbasis.push_back(to_tensor(tpl->joint_shape_basis, dtype).reshape({kNumJoints, 3, kNumBetas}));
  }
  rest_ = torch::stack(rest);
  shape_basis_ = torch::stack(basis);
  joint_rest_ = torch::stack(jrest);
  joint_basis_ = torch::stack(jbasis);
  weights_ = to_tensor(model.male.skin_weights, dtype);
}

BodyLayer::Output BodyLayer::forward(const ParamTensors& params,
                                     const torch::Tensor& gender) const {
  const auto batch = params.alpha.size(0);
  TORCH_CHECK(params.beta.size(0) == batch && params.tau.size(0) == batch &&
                  params.theta.size(0) == batch && gender.size(0) == batch,
              "body layer batch mismatch");
  TORCH_CHECK(params.theta.size(1) == kNumJoints && params.beta.size(1) == kNumBetas,
              "body layer parameter shape mismatch");
  const auto gidx = gender.to(torch::kLong);
  const auto rest = rest_.index_select(0, gidx);          // B N 3
  const auto basis = shape_basis_.index_select(0, gidx);  // B N 3 10
  const auto jrest = joint_rest_.index_select(0, gidx);
  const auto jbasis = joint_basis_.index_select(0, gidx);

  const auto beta = params.beta.unsqueeze(1).unsqueeze(1);  // B 1 1 10
  const auto v_shaped = rest + (basis * beta).sum(-1);      // B N 3
  const auto j_shaped = jrest + (jbasis * beta).sum(-1);    // B 22 3

  auto rots = axis_angle_to_matrix(params.theta);  // B 22 3 3
  const auto root_rot = torch::matmul(axis_angle_to_matrix(params.alpha), rots.select(1, 0));

  std::vector<torch::Tensor> g_rot(kNumJoints);
  std::vector<torch::Tensor> g_pos(kNumJoints);
  for (int j = 0; j < kNumJoints; ++j) {
    const int par = kJointParents[j];
    const auto jpos = j_shaped.select(1, j);  // B 3
    if (par == kRootParent) {
      g_rot[j] = root_rot;
      g_pos[j] = jpos;
    } else {
      const auto offset = (jpos - j_shaped.select(1, par)).unsqueeze(-1);
      g_rot[j] = torch::matmul(g_rot[par], rots.select(1, j));
      g_pos[j] = g_pos[par] + torch::matmul(g_rot[par], offset).squeeze(-1);
    }
  }
  const auto grot = torch::stack(g_rot, 1);  // B 22 3 3
  const auto gpos = torch::stack(g_pos, 1);  // B 22 3
  const auto atrans = gpos - torch::matmul(grot, j_shaped.unsqueeze(-1)).squeeze(-1);
  const auto a = torch::cat({grot, atrans.unsqueeze(-1)}, -1).reshape({batch, kNumJoints, 12});
  const auto t = torch::matmul(weights_, a).reshape({batch, -1, 3, 4});  // B N 3 4
  const auto verts = torch::matmul(t.slice(-1, 0, 3), v_shaped.unsqueeze(-1)).squeeze(-1) +
                     t.select(-1, 3) + params.tau.unsqueeze(1);
  return {verts, gpos + params.tau.unsqueeze(1)};
}

}  // namespace radarmesh
