// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <map>
#include <string>

#include "radarmesh/container.hpp"

namespace radarmesh {

// Named parameters and buffers, stored as f32 or f64 entries under `prefix`.
void put_module(ArrayContainer& c, const std::string& prefix, const torch::nn::Module& m);
// Shapes must match exactly; missing entries are an IoError.
void get_module(const ArrayContainer& c, const std::string& prefix, torch::nn::Module& m);

void put_tensor(ArrayContainer& c, const std::string& name, const torch::Tensor& t);
torch::Tensor get_tensor(const ArrayContainer& c, const std::string& name);

// Deep copy of parameter values, for keeping the best validation epoch.
using StateSnapshot = std::map<std::string, torch::Tensor>;
StateSnapshot snapshot(const torch::nn::Module& m);
void restore(torch::nn::Module& m, const StateSnapshot& s);

// FNV-1a over the names, shapes and raw bytes of every parameter.
std::string module_hash(const torch::nn::Module& m);

}  // namespace radarmesh
