// SPDX-License-Identifier: Apache-2.0
#include "radarmesh/checkpoint.hpp"

#include <iomanip>
#include <sstream>

#include "radarmesh/rng.hpp"

namespace radarmesh {

namespace {

std::vector<std::pair<std::string, torch::Tensor>> state_of(const torch::nn::Module& m) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& p : m.named_parameters()) out.emplace_back(p.key(), p.value());
  for (const auto& b : m.named_buffers()) out.emplace_back(b.key(), b.value());
  return out;
}

}  // namespace

void put_tensor(ArrayContainer& c, const std::string& name, const torch::Tensor& t) {
  const auto x = t.detach().cpu().contiguous();
  std::vector<std::int64_t> shape(x.sizes().begin(), x.sizes().end());
  switch (x.scalar_type()) {
    case torch::kFloat32: c.put(name, shape, x.data_ptr<float>()); break;
    case torch::kFloat64: c.put(name, shape, x.data_ptr<double>()); break;
    case torch::kInt32: c.put(name, shape, x.data_ptr<std::int32_t>()); break;
    case torch::kInt64: c.put(name, shape, x.data_ptr<std::int64_t>()); break;
    case torch::kUInt8: c.put(name, shape, x.data_ptr<std::uint8_t>()); break;
    default: throw IoError("unsupported tensor dtype for '" + name + "'");
  }
}

torch::Tensor get_tensor(const ArrayContainer& c, const std::string& name) {
  const ArrayEntry& e = c.at(name);
  torch::Dtype dt = torch::kFloat32;
  switch (e.dtype) {
    case DType::f32: dt = torch::kFloat32; break;
    case DType::f64: dt = torch::kFloat64; break;
    case DType::i32: dt = torch::kInt32; break;
    case DType::i64: dt = torch::kInt64; break;
    case DType::u8: dt = torch::kUInt8; break;
  }
  auto t = torch::empty(e.shape, dt);
  if (!e.bytes.empty()) std::memcpy(t.data_ptr(), e.bytes.data(), e.bytes.size());
  return t;
}

void put_module(ArrayContainer& c, const std::string& prefix, const torch::nn::Module& m) {
  for (const auto& [name, t] : state_of(m)) put_tensor(c, prefix + name, t);
}

void get_module(const ArrayContainer& c, const std::string& prefix, torch::nn::Module& m) {
  torch::NoGradGuard ng;
  for (auto& [name, t] : state_of(m)) {
    const auto src = get_tensor(c, prefix + name);
    if (src.sizes() != t.sizes()) throw IoError("shape mismatch for checkpoint entry '" + prefix + name + "'");
    t.copy_(src.to(t.dtype()));
  }
}

StateSnapshot snapshot(const torch::nn::Module& m) {
  StateSnapshot s;
  for (const auto& [name, t] : state_of(m)) s[name] = t.detach().clone();
  return s;
}

void restore(torch::nn::Module& m, const StateSnapshot& s) {
  torch::NoGradGuard ng;
  for (auto& [name, t] : state_of(m)) t.copy_(s.at(name));
}

std::string module_hash(const torch::nn::Module& m) {
  std::uint64_t h = fnv1a("");
  for (const auto& [name, t] : state_of(m)) {
    h = fnv1a(name, h);
    const auto x = t.detach().contiguous();
    for (auto d : x.sizes()) h = fnv1a(&d, sizeof(d), h);
    h = fnv1a(x.data_ptr(), static_cast<std::size_t>(x.numel()) * x.element_size(), h);
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace radarmesh
