#pragma once
// Multi-Stage Interactive Transformer block.
//
//   T = CBAM(CA_fuse([WA(G1), MSA(G2), CCA(G3), CA(G4)]))   G_i: shuffled channel quarters
//   H = sum_k conv_k(conv_k(conv_k(G)))                      k in {3, 5, 7}
//   out = sigmoid(O1) * ELU(O2),  [O1, O2] = split(conv3(H + T))
//
// The block keeps its channel count; width changes happen in the transitions
// between network levels.

#include <torch/torch.h>

#include <array>
#include <cstdint>

#include "starnet/attention.hpp"

namespace starnet {

// How T is produced.
enum class AttentionMixer {
  multi_stage,  // four shuffled branches, fusion channel attention, CBAM
  vanilla,      // one global multi-head self-attention over the whole map
  fusion_only,  // no shuffle/split, identity branches: T = CBAM(CA_fuse(G))
};

struct MitConfig {
  int64_t channels = 4;
  AttentionConfig window;        // WA branch, channels = C / 4
  AttentionConfig multi_scale;   // MSA branch
  AttentionConfig criss_cross;   // CCA branch
  AttentionConfig channel;       // CA branch
  AttentionConfig fusion;        // fusion CA, channels = C
  AttentionConfig vanilla;       // used when mixer == vanilla, channels = C
  int64_t shuffle_groups = 4;
  int64_t cbam_reduction = 16;
  int64_t cbam_kernel = 7;
  std::array<int64_t, 3> msdc_kernels{3, 5, 7};
  int64_t msdc_depth = 3;
  int64_t cgn_kernel = 3;
  AttentionMixer mixer = AttentionMixer::multi_stage;
  bool use_msdc = true;
  bool use_cgn = true;
  bool block_residual = true;

  // Throws ConfigError when the configuration cannot be instantiated.
  void validate() const;
};

class MultiStageAttentionImpl : public torch::nn::Module {
 public:
  explicit MultiStageAttentionImpl(const MitConfig& cfg);
  torch::Tensor forward(const torch::Tensor& g);

  // The four branch inputs after shuffling and splitting.
  std::vector<torch::Tensor> split(const torch::Tensor& g) const;

  WindowAttention window() const { return wa_; }
  MultiScaleAttention multi_scale() const { return msa_; }
  CrissCrossAttention criss_cross() const { return cca_; }
  ChannelAttention channel() const { return ca_; }
  ChannelAttention fusion() const { return fusion_; }
  Cbam cbam() const { return cbam_; }

 private:
  MitConfig cfg_;
  WindowAttention wa_{nullptr};
  MultiScaleAttention msa_{nullptr};
  CrissCrossAttention cca_{nullptr};
  ChannelAttention ca_{nullptr};
  ChannelAttention fusion_{nullptr};
  MultiScaleAttention vanilla_{nullptr};
  Cbam cbam_{nullptr};
};
TORCH_MODULE(MultiStageAttention);

class MultiScaleDeepConvImpl : public torch::nn::Module {
 public:
  explicit MultiScaleDeepConvImpl(const MitConfig& cfg);
  torch::Tensor forward(const torch::Tensor& g);
  torch::Tensor branch(size_t index, const torch::Tensor& g);
  size_t branch_count() const { return branches_.size(); }

 private:
  std::vector<torch::nn::Sequential> branches_;
};
TORCH_MODULE(MultiScaleDeepConv);

class ConvGatingNetworkImpl : public torch::nn::Module {
 public:
  explicit ConvGatingNetworkImpl(const MitConfig& cfg);
  torch::Tensor forward(const torch::Tensor& o);
  // [O1, O2] before activations.
  std::pair<torch::Tensor, torch::Tensor> expand(const torch::Tensor& o);
  // sigmoid(o1) * ELU(o2)
  static torch::Tensor gate(const torch::Tensor& o1, const torch::Tensor& o2);

 private:
  int64_t channels_;
  torch::nn::Conv2d conv_{nullptr};
};
TORCH_MODULE(ConvGatingNetwork);

class MitBlockImpl : public torch::nn::Module {
 public:
  explicit MitBlockImpl(const MitConfig& cfg);

  // x + CGN(H + T), or without the outer residual when block_residual is off.
  torch::Tensor forward(const torch::Tensor& x);
  // CGN(H + T) without the block residual.
  torch::Tensor transform(const torch::Tensor& x);

  MultiStageAttention attention() const { return msam_; }
  MultiScaleDeepConv deep_conv() const { return msdc_; }
  ConvGatingNetwork gating() const { return cgn_; }
  const MitConfig& config() const { return cfg_; }

 private:
  MitConfig cfg_;
  MultiStageAttention msam_{nullptr};
  MultiScaleDeepConv msdc_{nullptr};
  ConvGatingNetwork cgn_{nullptr};
};
TORCH_MODULE(MitBlock);

// Restormer-style block used when MIT is ablated:
// x + CA(LN(x)), then + FFN(LN(x)) with a 2x GELU pointwise feedforward.
class PlainTransformerBlockImpl : public torch::nn::Module {
 public:
  PlainTransformerBlockImpl(int64_t channels, int64_t heads);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  ChannelLayerNorm norm1_{nullptr};
  ChannelAttention attn_{nullptr};
  ChannelLayerNorm norm2_{nullptr};
  torch::nn::Conv2d ffn_in_{nullptr};
  torch::nn::Conv2d ffn_out_{nullptr};
};
TORCH_MODULE(PlainTransformerBlock);

}  // namespace starnet
