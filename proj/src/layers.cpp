#include "starnet/layers.hpp"

#include <cmath>

namespace starnet {

torch::nn::Conv2d make_conv(int64_t in, int64_t out, int64_t kernel, int64_t stride,
                            int64_t groups, bool bias) {
  torch::nn::Conv2d conv(torch::nn::Conv2dOptions(in, out, kernel)
                             .stride(stride)
                             .padding(kernel / 2)
                             .groups(groups)
                             .bias(bias));
  if (bias) {
    torch::NoGradGuard no_grad;
    conv->bias.zero_();
  }
  return conv;
}

torch::nn::Conv2d make_depthwise(int64_t channels, int64_t kernel, bool bias) {
  return make_conv(channels, channels, kernel, 1, channels, bias);
}

torch::nn::ConvTranspose2d make_upsample(int64_t in, int64_t out) {
  torch::nn::ConvTranspose2d up(
      torch::nn::ConvTranspose2dOptions(in, out, 3).stride(2).padding(1).output_padding(1));
  torch::NoGradGuard no_grad;
  up->bias.zero_();
  return up;
}

void trunc_normal_(torch::Tensor& t, double std) {
  // Inverse-CDF sampling restricted to [-2, 2] standard deviations.
  torch::NoGradGuard no_grad;
  const double lo = 0.5 * (1.0 + std::erf(-2.0 / std::sqrt(2.0)));
  const double hi = 0.5 * (1.0 + std::erf(2.0 / std::sqrt(2.0)));
  t.uniform_(2.0 * lo - 1.0, 2.0 * hi - 1.0);
  t.erfinv_();
  t.mul_(std * std::sqrt(2.0));
  t.clamp_(-2.0 * std, 2.0 * std);
}

torch::nn::Linear make_projection(int64_t in, int64_t out, bool bias) {
  torch::nn::Linear lin(torch::nn::LinearOptions(in, out).bias(bias));
  trunc_normal_(lin->weight, 0.02);
  if (bias) {
    torch::NoGradGuard no_grad;
    lin->bias.zero_();
  }
  return lin;
}

ChannelLayerNormImpl::ChannelLayerNormImpl(int64_t channels) {
  norm_ = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({channels})));
}

torch::Tensor ChannelLayerNormImpl::forward(const torch::Tensor& x) {
  return norm_->forward(x.permute({0, 2, 3, 1})).permute({0, 3, 1, 2});
}

}  // namespace starnet
