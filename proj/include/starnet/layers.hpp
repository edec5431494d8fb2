#pragma once
// Small building blocks shared by the attention, MIT, DFM and SSC modules.

#include <torch/torch.h>

#include <cstdint>

namespace starnet {

// Same-padded 2-D convolution with a zero-initialized bias.
torch::nn::Conv2d make_conv(int64_t in, int64_t out, int64_t kernel, int64_t stride = 1,
                            int64_t groups = 1, bool bias = true);

// Depthwise same-padded convolution (groups == channels).
torch::nn::Conv2d make_depthwise(int64_t channels, int64_t kernel, bool bias = true);

// Stride-2, kernel-3 transposed convolution that exactly doubles the spatial side.
torch::nn::ConvTranspose2d make_upsample(int64_t in, int64_t out);

// Linear projection with truncated-normal(0, 0.02) weights and zero bias.
torch::nn::Linear make_projection(int64_t in, int64_t out, bool bias = true);

// Fills `t` from N(0, std) truncated to [-2 std, 2 std].
void trunc_normal_(torch::Tensor& t, double std);

// LayerNorm over the channel axis of a [B, C, H, W] map.
class ChannelLayerNormImpl : public torch::nn::Module {
 public:
  explicit ChannelLayerNormImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::LayerNorm norm_{nullptr};
};
TORCH_MODULE(ChannelLayerNorm);

}  // namespace starnet
