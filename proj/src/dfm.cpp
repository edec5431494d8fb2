#include "starnet/dfm.hpp"

#include <string>

#include "starnet/errors.hpp"
#include "starnet/layers.hpp"

namespace starnet {

void DfmConfig::validate() const {
  if (channels <= 0 || patch_size <= 0) throw ConfigError("dfm: channels and patch size must be positive");
  if (num_heads <= 0 || embed_dim() % num_heads != 0) {
    throw ConfigError("dfm: embed dim " + std::to_string(embed_dim()) + " is not divisible by " +
                      std::to_string(num_heads) + " heads");
  }
  if (gating_kernel <= 0 || gating_kernel % 2 == 0) throw ConfigError("dfm: gating kernel must be odd");
  if (groups != 2 * channels) {
    throw ConfigError("dfm: groups must equal twice the channel count (" +
                      std::to_string(2 * channels) + "), got " + std::to_string(groups));
  }
}

SpatialSelfAttentionImpl::SpatialSelfAttentionImpl(const DfmConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  const int64_t d = cfg.embed_dim();
  q_ = register_module("q", make_projection(d, d, false));
  k_ = register_module("k", make_projection(d, d, false));
  v_ = register_module("v", make_projection(d, d, false));
}

AttentionOutput SpatialSelfAttentionImpl::attend(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != cfg_.channels) {
    throw ShapeError("dfm: expected " + std::to_string(cfg_.channels) + " input channels");
  }
  auto grid = patchify(x, cfg_.patch_size);
  const int64_t b = grid.size(0), d = grid.size(1), th = grid.size(2), tw = grid.size(3);
  auto tokens = grid.flatten(2).transpose(1, 2);
  auto q = split_heads(q_->forward(tokens), cfg_.num_heads);
  auto k = split_heads(k_->forward(tokens), cfg_.num_heads);
  auto v = split_heads(v_->forward(tokens), cfg_.num_heads);
  auto att = scaled_dot_attention(q, k, v);
  auto out = merge_heads(att.output).transpose(1, 2).reshape({b, d, th, tw});
  return {unpatchify(out, cfg_.patch_size), att.weights};
}

ChannelGatingImpl::ChannelGatingImpl(const DfmConfig& cfg) {
  cfg.validate();
  const int64_t c = cfg.channels;
  dw1_ = register_module("dw1", make_depthwise(c, cfg.gating_kernel));
  pw1_ = register_module("pw1", make_conv(c, c * cfg.expansion_factor, 1));
  dw2_ = register_module("dw2", make_depthwise(c, cfg.gating_kernel));
  pw2_ = register_module("pw2", make_conv(c, c * cfg.expansion_factor, 1));
  out_ = register_module("out", make_conv(c * cfg.expansion_factor, c, 1));
}

torch::Tensor ChannelGatingImpl::gate_branch(const torch::Tensor& x) { return pw1_->forward(dw1_->forward(x)); }
torch::Tensor ChannelGatingImpl::value_branch(const torch::Tensor& x) { return pw2_->forward(dw2_->forward(x)); }

torch::Tensor ChannelGatingImpl::pooled_gate(const torch::Tensor& o1) {
  return torch::amax(torch::gelu(o1), {2, 3}, /*keepdim=*/true);
}

torch::Tensor ChannelGatingImpl::forward(const torch::Tensor& x) {
  return out_->forward(pooled_gate(gate_branch(x)) * value_branch(x));
}

DfmImpl::DfmImpl(const DfmConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  ssa_ = register_module("ssa", SpatialSelfAttention(cfg));
  gate_ = register_module("gate", ChannelGating(cfg));
}

torch::Tensor DfmImpl::forward(const torch::Tensor& x) { return gate_->forward(ssa_->forward(x)); }

}  // namespace starnet
