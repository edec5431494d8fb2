#pragma once
// Degenerate filter module: patch-token spatial self-attention followed by a
// globally max-pooled channel gate. Sits on every level of the skip path.

#include <torch/torch.h>

#include <cstdint>

#include "starnet/attention.hpp"

namespace starnet {

struct DfmConfig {
  int64_t channels = 4;
  int64_t patch_size = 4;
  int64_t num_heads = 1;
  int64_t expansion_factor = 1;  // carried for completeness; no MLP is instantiated
  int64_t gating_kernel = 3;     // K_c of the depthwise convolutions
  int64_t groups = 8;            // combined depthwise groups of both gate branches (2 C)

  int64_t embed_dim() const { return patch_size * patch_size * channels; }
  void validate() const;
};

// O = softmax(Q K^T / sqrt(d)) V over non-overlapping P x P patch tokens.
class SpatialSelfAttentionImpl : public torch::nn::Module {
 public:
  explicit SpatialSelfAttentionImpl(const DfmConfig& cfg);
  torch::Tensor forward(const torch::Tensor& x) { return attend(x).output; }
  AttentionOutput attend(const torch::Tensor& x);

  torch::nn::Linear query() const { return q_; }
  torch::nn::Linear key() const { return k_; }
  torch::nn::Linear value() const { return v_; }

 private:
  DfmConfig cfg_;
  torch::nn::Linear q_{nullptr};
  torch::nn::Linear k_{nullptr};
  torch::nn::Linear v_{nullptr};
};
TORCH_MODULE(SpatialSelfAttention);

// O1 = conv1(dwconv3(x)), O2 = conv1(dwconv3(x)), out = conv1(GMP(GELU(O1)) * O2).
class ChannelGatingImpl : public torch::nn::Module {
 public:
  explicit ChannelGatingImpl(const DfmConfig& cfg);
  torch::Tensor forward(const torch::Tensor& x);

  torch::Tensor gate_branch(const torch::Tensor& x);   // O1
  torch::Tensor value_branch(const torch::Tensor& x);  // O2
  // GMP(GELU(o1)) -> [B, C, 1, 1]
  static torch::Tensor pooled_gate(const torch::Tensor& o1);
  torch::nn::Conv2d output_conv() const { return out_; }

 private:
  torch::nn::Conv2d dw1_{nullptr}, pw1_{nullptr};
  torch::nn::Conv2d dw2_{nullptr}, pw2_{nullptr};
  torch::nn::Conv2d out_{nullptr};
};
TORCH_MODULE(ChannelGating);

class DfmImpl : public torch::nn::Module {
 public:
  explicit DfmImpl(const DfmConfig& cfg);
  torch::Tensor forward(const torch::Tensor& x);

  SpatialSelfAttention spatial() const { return ssa_; }
  ChannelGating gating() const { return gate_; }
  const DfmConfig& config() const { return cfg_; }

 private:
  DfmConfig cfg_;
  SpatialSelfAttention ssa_{nullptr};
  ChannelGating gate_{nullptr};
};
TORCH_MODULE(Dfm);

}  // namespace starnet
