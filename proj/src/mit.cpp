#include "starnet/mit.hpp"

#include <string>

#include "starnet/errors.hpp"

namespace starnet {
namespace {

void require_branch(const AttentionConfig& a, int64_t expected, const char* name) {
  if (a.channels != expected) {
    throw ConfigError(std::string("mit: ") + name + " branch has " + std::to_string(a.channels) +
                      " channels, expected " + std::to_string(expected));
  }
}

}  // namespace

void MitConfig::validate() const {
  if (channels <= 0 || channels % 4 != 0) {
    throw ConfigError("mit: channel count " + std::to_string(channels) + " is not divisible by 4");
  }
  if (shuffle_groups <= 0 || channels % shuffle_groups != 0) {
    throw ConfigError("mit: shuffle groups " + std::to_string(shuffle_groups) +
                      " do not divide " + std::to_string(channels) + " channels");
  }
  for (size_t i = 0; i < msdc_kernels.size(); ++i) {
    if (msdc_kernels[i] <= 0 || msdc_kernels[i] % 2 == 0) {
      throw ConfigError("mit: deep-conv kernels must be odd");
    }
    if (i > 0 && msdc_kernels[i] <= msdc_kernels[i - 1]) {
      throw ConfigError("mit: deep-conv kernels must be strictly increasing");
    }
  }
  if (msdc_depth <= 0) throw ConfigError("mit: deep-conv depth must be positive");
  if (cgn_kernel <= 0 || cgn_kernel % 2 == 0) throw ConfigError("mit: gating kernel must be odd");
  switch (mixer) {
    case AttentionMixer::multi_stage:
      require_branch(window, channels / 4, "window attention");
      require_branch(multi_scale, channels / 4, "multi-scale attention");
      require_branch(criss_cross, channels / 4, "criss-cross attention");
      require_branch(channel, channels / 4, "channel attention");
      [[fallthrough]];
    case AttentionMixer::fusion_only:
      require_branch(fusion, channels, "fusion channel attention");
      break;
    case AttentionMixer::vanilla:
      require_branch(vanilla, channels, "vanilla attention");
      break;
  }
}

// ---------------------------------------------------------------------------

MultiStageAttentionImpl::MultiStageAttentionImpl(const MitConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  switch (cfg.mixer) {
    case AttentionMixer::multi_stage:
      wa_ = register_module("wa", WindowAttention(cfg.window));
      msa_ = register_module("msa", MultiScaleAttention(cfg.multi_scale));
      cca_ = register_module("cca", CrissCrossAttention(cfg.criss_cross));
      ca_ = register_module("ca", ChannelAttention(cfg.channel));
      [[fallthrough]];
    case AttentionMixer::fusion_only:
      fusion_ = register_module("fusion", ChannelAttention(cfg.fusion));
      cbam_ = register_module("cbam", Cbam(cfg.channels, cfg.cbam_reduction, cfg.cbam_kernel));
      break;
    case AttentionMixer::vanilla:
      vanilla_ = register_module("vanilla", MultiScaleAttention(cfg.vanilla));
      break;
  }
}

std::vector<torch::Tensor> MultiStageAttentionImpl::split(const torch::Tensor& g) const {
  return starnet::channel_shuffle(g, cfg_.shuffle_groups).chunk(4, 1);
}

torch::Tensor MultiStageAttentionImpl::forward(const torch::Tensor& g) {
  if (g.dim() != 4 || g.size(1) != cfg_.channels) {
    throw ShapeError("mit: expected " + std::to_string(cfg_.channels) + " input channels");
  }
  switch (cfg_.mixer) {
    case AttentionMixer::vanilla:
      return vanilla_->forward(g);
    case AttentionMixer::fusion_only:
      return cbam_->forward(fusion_->forward(g));
    case AttentionMixer::multi_stage:
      break;
  }
  auto parts = split(g);
  auto mixed = torch::cat({wa_->forward(parts[0]), msa_->forward(parts[1]),
                           cca_->forward(parts[2]), ca_->forward(parts[3])},
                          1);
  return cbam_->forward(fusion_->forward(mixed));
}

// ---------------------------------------------------------------------------

MultiScaleDeepConvImpl::MultiScaleDeepConvImpl(const MitConfig& cfg) {
  cfg.validate();
  for (size_t b = 0; b < cfg.msdc_kernels.size(); ++b) {
    torch::nn::Sequential stack;
    for (int64_t d = 0; d < cfg.msdc_depth; ++d) {
      stack->push_back(make_depthwise(cfg.channels, cfg.msdc_kernels[b]));
    }
    branches_.push_back(register_module("branch" + std::to_string(b), stack));
  }
}

torch::Tensor MultiScaleDeepConvImpl::branch(size_t index, const torch::Tensor& g) {
  return branches_.at(index)->forward(g);
}

torch::Tensor MultiScaleDeepConvImpl::forward(const torch::Tensor& g) {
  auto h = branches_[0]->forward(g);
  for (size_t b = 1; b < branches_.size(); ++b) h = h + branches_[b]->forward(g);
  return h;
}

// ---------------------------------------------------------------------------

ConvGatingNetworkImpl::ConvGatingNetworkImpl(const MitConfig& cfg) : channels_(cfg.channels) {
  cfg.validate();
  conv_ = register_module("conv", make_conv(channels_, 2 * channels_, cfg.cgn_kernel));
}

std::pair<torch::Tensor, torch::Tensor> ConvGatingNetworkImpl::expand(const torch::Tensor& o) {
  auto e = conv_->forward(o);
  if (e.size(1) % 2 != 0) {
    throw ConfigError("gating network: expansion produced an odd channel count");
  }
  auto halves = e.chunk(2, 1);
  return {halves[0], halves[1]};
}

torch::Tensor ConvGatingNetworkImpl::gate(const torch::Tensor& o1, const torch::Tensor& o2) {
  return torch::sigmoid(o1) * torch::elu(o2);
}

torch::Tensor ConvGatingNetworkImpl::forward(const torch::Tensor& o) {
  auto [o1, o2] = expand(o);
  return gate(o1, o2);
}

// ---------------------------------------------------------------------------

MitBlockImpl::MitBlockImpl(const MitConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  msam_ = register_module("msam", MultiStageAttention(cfg));
  if (cfg.use_msdc) msdc_ = register_module("msdc", MultiScaleDeepConv(cfg));
  if (cfg.use_cgn) cgn_ = register_module("cgn", ConvGatingNetwork(cfg));
}

torch::Tensor MitBlockImpl::transform(const torch::Tensor& x) {
  auto o = msam_->forward(x);
  if (msdc_) o = msdc_->forward(x) + o;
  return cgn_ ? cgn_->forward(o) : o;
}

torch::Tensor MitBlockImpl::forward(const torch::Tensor& x) {
  return cfg_.block_residual ? x + transform(x) : transform(x);
}

// ---------------------------------------------------------------------------

PlainTransformerBlockImpl::PlainTransformerBlockImpl(int64_t channels, int64_t heads) {
  AttentionConfig a;
  a.channels = channels;
  a.num_heads = heads;
  norm1_ = register_module("norm1", ChannelLayerNorm(channels));
  attn_ = register_module("attn", ChannelAttention(a));
  norm2_ = register_module("norm2", ChannelLayerNorm(channels));
  ffn_in_ = register_module("ffn_in", make_conv(channels, 2 * channels, 1));
  ffn_out_ = register_module("ffn_out", make_conv(2 * channels, channels, 1));
}

torch::Tensor PlainTransformerBlockImpl::forward(const torch::Tensor& x) {
  auto y = x + attn_->forward(norm1_->forward(x));
  return y + ffn_out_->forward(torch::gelu(ffn_in_->forward(norm2_->forward(y))));
}

}  // namespace starnet
