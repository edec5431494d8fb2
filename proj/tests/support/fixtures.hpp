#pragma once
// Small helpers shared by the test suites.

#include <torch/torch.h>

#include "starnet/config.hpp"

namespace starnet::testing {

inline const torch::TensorOptions f64 = torch::TensorOptions().dtype(torch::kFloat64);

// Randomizes every parameter so that zero-initialized biases do not hide bugs.
inline void randomize(torch::nn::Module& m, double scale = 0.3) {
  torch::NoGradGuard no_grad;
  for (auto& p : m.parameters()) p.normal_(0, scale);
}

inline void zero_parameters(torch::nn::Module& m) {
  torch::NoGradGuard no_grad;
  for (auto& p : m.parameters()) p.zero_();
}

inline double max_abs(const torch::Tensor& t) { return t.abs().max().item<double>(); }

// Level-0 block configuration of a preset.
inline MitConfig preset_block(Preset p, size_t level = 0) { return make_preset(p).mit.at(level); }

}  // namespace starnet::testing
