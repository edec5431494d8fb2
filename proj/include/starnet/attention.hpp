#pragma once
// Attention primitives used by the MIT block and the degenerate filter module.
//
// All mechanisms take and return a [B, C, H, W] feature map of identical shape.
// Window and multi-scale attention tokenize the map into non-overlapping
// P x P patches (token dimension P*P*C); criss-cross attention works on pixels;
// channel attention treats channels as tokens.

#include <torch/torch.h>

#include <array>
#include <cstdint>

#include "starnet/layers.hpp"

namespace starnet {

struct AttentionConfig {
  int64_t channels = 1;     // C of the feature map the mechanism is applied to
  int64_t num_heads = 1;    // H
  int64_t patch_size = 1;   // P (window / multi-scale attention)
  int64_t window_size = 0;  // WS in pixels (window attention)
  int64_t sr_ratio = 1;     // SR, token-grid reduction for keys/values (multi-scale attention)
  // Q_c, K_c, V_c (criss-cross attention); a zero V_c means V_c = C.
  std::array<int64_t, 3> qkv_channels{1, 1, 0};
  bool use_bias = true;     // channel attention convolutions

  int64_t embed_dim() const { return patch_size * patch_size * channels; }
};

// Output of an attention op together with its post-softmax weights.
struct AttentionOutput {
  torch::Tensor output;
  torch::Tensor weights;
};

// Output channel k takes input channel (k mod g) * (C / g) + floor(k / g).
torch::Tensor channel_shuffle(const torch::Tensor& x, int64_t groups);

// softmax(q k^T / sqrt(d)) v over the last two axes; leading axes are batch axes.
// q: [..., N, d], k: [..., M, d], v: [..., M, dv].
AttentionOutput scaled_dot_attention(const torch::Tensor& q, const torch::Tensor& k,
                                     const torch::Tensor& v);

// [B, C, H, W] -> [B, P*P*C, H/P, W/P] and back.
torch::Tensor patchify(const torch::Tensor& x, int64_t patch);
torch::Tensor unpatchify(const torch::Tensor& tokens, int64_t patch);

// Largest d <= cap with n % d == 0.
int64_t largest_divisor_at_most(int64_t n, int64_t cap);

// [Bn, N, H*dh] <-> [Bn, H, N, dh]
torch::Tensor split_heads(const torch::Tensor& x, int64_t heads);
torch::Tensor merge_heads(const torch::Tensor& x);

class WindowAttentionImpl : public torch::nn::Module {
 public:
  explicit WindowAttentionImpl(const AttentionConfig& cfg);

  torch::Tensor forward(const torch::Tensor& x) { return attend(x).output; }
  AttentionOutput attend(const torch::Tensor& x);

  // Runs layer norm, projections and attention on a [Bn, N, D] token batch.
  AttentionOutput attend_tokens(const torch::Tensor& tokens);

  torch::nn::LayerNorm norm() const { return norm_; }
  torch::nn::Linear qkv() const { return qkv_; }
  torch::nn::Linear projection() const { return proj_; }

  const AttentionConfig& config() const { return cfg_; }

 private:
  AttentionConfig cfg_;
  torch::nn::LayerNorm norm_{nullptr};
  torch::nn::Linear qkv_{nullptr};
  torch::nn::Linear proj_{nullptr};
};
TORCH_MODULE(WindowAttention);

// Shunted-style attention: full-resolution queries, keys and values from an
// SR x SR average-pooled token grid. With SR = 1 this is plain global
// multi-head self-attention over patch tokens.
class MultiScaleAttentionImpl : public torch::nn::Module {
 public:
  explicit MultiScaleAttentionImpl(const AttentionConfig& cfg);

  torch::Tensor forward(const torch::Tensor& x) { return attend(x).output; }
  AttentionOutput attend(const torch::Tensor& x);

  torch::nn::Linear query() const { return q_; }
  torch::nn::Linear key_value() const { return kv_; }
  torch::nn::Linear projection() const { return proj_; }
  const AttentionConfig& config() const { return cfg_; }

 private:
  AttentionConfig cfg_;
  torch::nn::Linear q_{nullptr};
  torch::nn::Linear kv_{nullptr};
  torch::nn::Linear proj_{nullptr};
};
TORCH_MODULE(MultiScaleAttention);

// Every pixel attends to the H + W - 1 pixels of its own row and column.
// Weights are returned as [B, H, W, H + W]: the first H entries index the
// column, the last W the row (the duplicate self entry of the row is zero).
class CrissCrossAttentionImpl : public torch::nn::Module {
 public:
  explicit CrissCrossAttentionImpl(const AttentionConfig& cfg);

  torch::Tensor forward(const torch::Tensor& x) { return attend(x).output; }
  AttentionOutput attend(const torch::Tensor& x);

  torch::Tensor query(const torch::Tensor& x) { return q_->forward(x); }
  torch::Tensor key(const torch::Tensor& x) { return k_->forward(x); }
  torch::Tensor value(const torch::Tensor& x) { return v_->forward(x); }
  const AttentionConfig& config() const { return cfg_; }

 private:
  AttentionConfig cfg_;
  torch::nn::Conv2d q_{nullptr};
  torch::nn::Conv2d k_{nullptr};
  torch::nn::Conv2d v_{nullptr};
  torch::nn::Conv2d out_{nullptr};  // only when V_c != C
};
TORCH_MODULE(CrissCrossAttention);

// Transposed (channel-token) attention: per head a (C/H) x (C/H) attention map
// between L2-normalized channel vectors, scaled by a learned temperature.
class ChannelAttentionImpl : public torch::nn::Module {
 public:
  struct Projections {
    torch::Tensor q, k, v;  // [B, C, H, W]
  };

  explicit ChannelAttentionImpl(const AttentionConfig& cfg);

  torch::Tensor forward(const torch::Tensor& x) { return attend(x).output; }
  AttentionOutput attend(const torch::Tensor& x);

  Projections project(const torch::Tensor& x);
  torch::nn::Conv2d qkv() const { return qkv_; }
  torch::nn::Conv2d qkv_depthwise() const { return qkv_dw_; }
  torch::nn::Conv2d output_projection() const { return proj_; }
  torch::Tensor temperature() const { return temperature_; }
  const AttentionConfig& config() const { return cfg_; }

 private:
  AttentionConfig cfg_;
  torch::nn::Conv2d qkv_{nullptr};
  torch::nn::Conv2d qkv_dw_{nullptr};
  torch::nn::Conv2d proj_{nullptr};
  torch::Tensor temperature_;
};
TORCH_MODULE(ChannelAttention);

// Channel gate (shared MLP over global average and max pooling) followed by a
// spatial gate (K x K conv over channel-wise mean and max), both sigmoid.
class CbamImpl : public torch::nn::Module {
 public:
  CbamImpl(int64_t channels, int64_t reduction, int64_t kernel);

  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor channel_gate(const torch::Tensor& x);  // [B, C, 1, 1]
  torch::Tensor spatial_gate(const torch::Tensor& x);  // [B, 1, H, W]

  int64_t hidden_width() const { return hidden_; }

 private:
  int64_t hidden_;
  torch::nn::Conv2d fc1_{nullptr};
  torch::nn::Conv2d fc2_{nullptr};
  torch::nn::Conv2d spatial_{nullptr};
};
TORCH_MODULE(Cbam);

}  // namespace starnet
