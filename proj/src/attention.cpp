#include "starnet/attention.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "starnet/errors.hpp"

namespace starnet {
namespace {

void require_map(const torch::Tensor& x, int64_t channels, const char* op) {
  if (x.dim() != 4) {
    throw ShapeError(std::string(op) + ": expected a [B, C, H, W] map, got " +
                     std::to_string(x.dim()) + " dims");
  }
  if (x.size(1) != channels) {
    throw ShapeError(std::string(op) + ": expected " + std::to_string(channels) +
                     " channels, got " + std::to_string(x.size(1)));
  }
}

void require_heads(int64_t dim, int64_t heads, const char* op) {
  if (heads <= 0 || dim % heads != 0) {
    throw ConfigError(std::string(op) + ": embed dim " + std::to_string(dim) +
                      " is not divisible by " + std::to_string(heads) + " heads");
  }
}

// [B, D, th, tw] -> [B, th*tw, D]
torch::Tensor grid_to_tokens(const torch::Tensor& t) { return t.flatten(2).transpose(1, 2); }

torch::Tensor tokens_to_grid(const torch::Tensor& tok, int64_t th, int64_t tw) {
  return tok.transpose(1, 2).reshape({tok.size(0), tok.size(2), th, tw});
}

}  // namespace

torch::Tensor channel_shuffle(const torch::Tensor& x, int64_t groups) {
  if (x.dim() != 4) throw ShapeError("channel_shuffle: expected a [B, C, H, W] map");
  const int64_t c = x.size(1);
  if (groups <= 0 || c % groups != 0) {
    throw ConfigError("channel_shuffle: " + std::to_string(c) +
                      " channels cannot be split into " + std::to_string(groups) + " groups");
  }
  if (groups == 1) return x;
  return x.view({x.size(0), groups, c / groups, x.size(2), x.size(3)})
      .transpose(1, 2)
      .reshape_as(x);
}

AttentionOutput scaled_dot_attention(const torch::Tensor& q, const torch::Tensor& k,
                                     const torch::Tensor& v) {
  if (q.dim() < 2 || k.dim() != q.dim() || v.dim() != q.dim()) {
    throw ShapeError("scaled_dot_attention: q, k, v must have the same rank >= 2");
  }
  const int64_t d = q.size(-1);
  if (d <= 0) throw ShapeError("scaled_dot_attention: key dimension must be positive");
  if (k.size(-1) != d) throw ShapeError("scaled_dot_attention: q and k feature dims differ");
  if (k.size(-2) != v.size(-2)) throw ShapeError("scaled_dot_attention: k and v token counts differ");
  for (int64_t i = 0; i < q.dim() - 2; ++i) {
    if (q.size(i) != k.size(i) || q.size(i) != v.size(i)) {
      throw ShapeError("scaled_dot_attention: batch axes of q, k, v differ");
    }
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  auto weights = torch::softmax(q.matmul(k.transpose(-2, -1)) * scale, -1);
  return {weights.matmul(v), weights};
}

torch::Tensor patchify(const torch::Tensor& x, int64_t patch) {
  if (x.size(2) % patch != 0 || x.size(3) % patch != 0) {
    throw ShapeError("patch size " + std::to_string(patch) + " does not divide a " +
                     std::to_string(x.size(2)) + "x" + std::to_string(x.size(3)) + " map");
  }
  return patch == 1 ? x : torch::pixel_unshuffle(x, patch);
}

torch::Tensor unpatchify(const torch::Tensor& tokens, int64_t patch) {
  return patch == 1 ? tokens : torch::pixel_shuffle(tokens, patch);
}

int64_t largest_divisor_at_most(int64_t n, int64_t cap) {
  for (int64_t d = std::min(n, cap); d > 1; --d) {
    if (n % d == 0) return d;
  }
  return 1;
}

torch::Tensor split_heads(const torch::Tensor& x, int64_t heads) {
  const int64_t dh = x.size(2) / heads;
  return x.view({x.size(0), x.size(1), heads, dh}).transpose(1, 2);
}

torch::Tensor merge_heads(const torch::Tensor& x) {
  return x.transpose(1, 2).reshape({x.size(0), x.size(2), x.size(1) * x.size(3)});
}

// ---------------------------------------------------------------------------
// Window attention

WindowAttentionImpl::WindowAttentionImpl(const AttentionConfig& cfg) : cfg_(cfg) {
  if (cfg.window_size <= 0 || cfg.window_size % cfg.patch_size != 0) {
    throw ConfigError("window attention: window size " + std::to_string(cfg.window_size) +
                      " must be a positive multiple of patch size " +
                      std::to_string(cfg.patch_size));
  }
  const int64_t d = cfg.embed_dim();
  require_heads(d, cfg.num_heads, "window attention");
  norm_ = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
  qkv_ = register_module("qkv", make_projection(d, 3 * d));
  proj_ = register_module("proj", make_projection(d, d));
}

AttentionOutput WindowAttentionImpl::attend_tokens(const torch::Tensor& tokens) {
  const int64_t bn = tokens.size(0), n = tokens.size(1), d = tokens.size(2);
  auto qkv = qkv_->forward(norm_->forward(tokens)).view({bn, n, 3, d});
  auto q = split_heads(qkv.select(2, 0), cfg_.num_heads);
  auto k = split_heads(qkv.select(2, 1), cfg_.num_heads);
  auto v = split_heads(qkv.select(2, 2), cfg_.num_heads);
  auto att = scaled_dot_attention(q, k, v);
  return {proj_->forward(merge_heads(att.output)), att.weights};
}

AttentionOutput WindowAttentionImpl::attend(const torch::Tensor& x) {
  require_map(x, cfg_.channels, "window attention");
  const int64_t ws = cfg_.window_size, p = cfg_.patch_size;
  if (x.size(2) % ws != 0 || x.size(3) % ws != 0) {
    throw ShapeError("window attention: window " + std::to_string(ws) + " does not tile a " +
                     std::to_string(x.size(2)) + "x" + std::to_string(x.size(3)) + " map");
  }
  auto grid = patchify(x, p);
  const int64_t b = grid.size(0), d = grid.size(1), th = grid.size(2), tw = grid.size(3);
  const int64_t w = ws / p, nh = th / w, nw = tw / w;
  auto windows =
      grid.view({b, d, nh, w, nw, w}).permute({0, 2, 4, 3, 5, 1}).reshape({b * nh * nw, w * w, d});
  auto att = attend_tokens(windows);
  auto out = att.output.view({b, nh, nw, w, w, d}).permute({0, 5, 1, 3, 2, 4}).reshape({b, d, th, tw});
  return {unpatchify(out, p), att.weights};
}

// ---------------------------------------------------------------------------
// Multi-scale attention

MultiScaleAttentionImpl::MultiScaleAttentionImpl(const AttentionConfig& cfg) : cfg_(cfg) {
  if (cfg.sr_ratio <= 0) throw ConfigError("multi-scale attention: SR must be positive");
  const int64_t d = cfg.embed_dim();
  require_heads(d, cfg.num_heads, "multi-scale attention");
  q_ = register_module("q", make_projection(d, d));
  kv_ = register_module("kv", make_projection(d, 2 * d));
  proj_ = register_module("proj", make_projection(d, d));
}

AttentionOutput MultiScaleAttentionImpl::attend(const torch::Tensor& x) {
  require_map(x, cfg_.channels, "multi-scale attention");
  auto grid = patchify(x, cfg_.patch_size);
  const int64_t sr = cfg_.sr_ratio, th = grid.size(2), tw = grid.size(3), d = grid.size(1);
  if (th % sr != 0 || tw % sr != 0) {
    throw ShapeError("multi-scale attention: SR " + std::to_string(sr) +
                     " does not divide the " + std::to_string(th) + "x" + std::to_string(tw) +
                     " token grid");
  }
  auto reduced = sr == 1 ? grid : torch::avg_pool2d(grid, {sr, sr}, {sr, sr});
  auto q = split_heads(q_->forward(grid_to_tokens(grid)), cfg_.num_heads);
  auto kv = kv_->forward(grid_to_tokens(reduced));
  auto k = split_heads(kv.narrow(2, 0, d).contiguous(), cfg_.num_heads);
  auto v = split_heads(kv.narrow(2, d, d).contiguous(), cfg_.num_heads);
  auto att = scaled_dot_attention(q, k, v);
  auto out = proj_->forward(merge_heads(att.output));
  return {unpatchify(tokens_to_grid(out, th, tw), cfg_.patch_size), att.weights};
}

// ---------------------------------------------------------------------------
// Criss-cross attention

CrissCrossAttentionImpl::CrissCrossAttentionImpl(const AttentionConfig& cfg) : cfg_(cfg) {
  const int64_t c = cfg.channels;
  auto [qc, kc, vc] = cfg.qkv_channels;
  if (vc == 0) vc = c;
  if (qc <= 0 || kc <= 0 || qc > c || kc > c || vc > c) {
    throw ConfigError("criss-cross attention: Q_c/K_c/V_c (" + std::to_string(qc) + ", " +
                      std::to_string(kc) + ", " + std::to_string(vc) + ") must lie in [1, " +
                      std::to_string(c) + "]");
  }
  if (qc != kc) throw ConfigError("criss-cross attention: Q_c must equal K_c");
  cfg_.qkv_channels = {qc, kc, vc};
  q_ = register_module("q", make_conv(c, qc, 1));
  k_ = register_module("k", make_conv(c, kc, 1, 1, 1, false));
  v_ = register_module("v", make_conv(c, vc, 1));
  if (vc != c) out_ = register_module("out", make_conv(vc, c, 1));
}

AttentionOutput CrissCrossAttentionImpl::attend(const torch::Tensor& x) {
  require_map(x, cfg_.channels, "criss-cross attention");
  const int64_t h = x.size(2), w = x.size(3);
  auto q = q_->forward(x), k = k_->forward(x), v = v_->forward(x);
  auto e_col = torch::einsum("bcij,bckj->bijk", {q, k});  // [B, H, W, H]
  auto e_row = torch::einsum("bcij,bcik->bijk", {q, k});  // [B, H, W, W]
  // (i, j) already appears in its column; drop the duplicate from the row.
  auto self = torch::eye(w, torch::TensorOptions().dtype(torch::kBool).device(x.device()));
  e_row = e_row.masked_fill(self.view({1, 1, w, w}), -std::numeric_limits<double>::infinity());
  auto weights = torch::softmax(torch::cat({e_col, e_row}, -1), -1);
  auto a_col = weights.narrow(-1, 0, h);
  auto a_row = weights.narrow(-1, h, w);
  auto out = torch::einsum("bijk,bckj->bcij", {a_col, v}) + torch::einsum("bijk,bcik->bcij", {a_row, v});
  if (out_) out = out_->forward(out);
  return {out, weights};
}

// ---------------------------------------------------------------------------
// Channel attention

ChannelAttentionImpl::ChannelAttentionImpl(const AttentionConfig& cfg) : cfg_(cfg) {
  const int64_t c = cfg.channels;
  require_heads(c, cfg.num_heads, "channel attention");
  qkv_ = register_module("qkv", make_conv(c, 3 * c, 1, 1, 1, cfg.use_bias));
  qkv_dw_ = register_module("qkv_dw", make_depthwise(3 * c, 3, cfg.use_bias));
  proj_ = register_module("proj", make_conv(c, c, 1, 1, 1, cfg.use_bias));
  temperature_ = register_parameter("temperature", torch::ones({cfg.num_heads, 1, 1}));
}

ChannelAttentionImpl::Projections ChannelAttentionImpl::project(const torch::Tensor& x) {
  auto qkv = qkv_dw_->forward(qkv_->forward(x)).chunk(3, 1);
  return {qkv[0], qkv[1], qkv[2]};
}

AttentionOutput ChannelAttentionImpl::attend(const torch::Tensor& x) {
  require_map(x, cfg_.channels, "channel attention");
  const int64_t b = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
  const int64_t heads = cfg_.num_heads;
  auto p = project(x);
  auto shape = std::vector<int64_t>{b, heads, c / heads, h * w};
  namespace F = torch::nn::functional;
  auto norm = F::NormalizeFuncOptions().dim(-1);
  auto q = F::normalize(p.q.reshape(shape), norm);
  auto k = F::normalize(p.k.reshape(shape), norm);
  auto v = p.v.reshape(shape);
  auto weights = torch::softmax(q.matmul(k.transpose(-2, -1)) * temperature_, -1);
  auto out = weights.matmul(v).reshape({b, c, h, w});
  return {proj_->forward(out), weights};
}

// ---------------------------------------------------------------------------
// CBAM

CbamImpl::CbamImpl(int64_t channels, int64_t reduction, int64_t kernel) {
  if (reduction <= 0 || channels < reduction || channels % reduction != 0) {
    throw ConfigError("cbam: " + std::to_string(channels) +
                      " channels cannot be reduced by ratio " + std::to_string(reduction));
  }
  if (kernel <= 0 || kernel % 2 == 0) throw ConfigError("cbam: spatial kernel must be odd");
  hidden_ = channels / reduction;
  fc1_ = register_module("fc1", make_conv(channels, hidden_, 1));
  fc2_ = register_module("fc2", make_conv(hidden_, channels, 1));
  // With only a few hidden units, default bias init often leaves every unit negative for all
  // pooled inputs and the MLP never trains.
  torch::nn::init::constant_(fc1_->bias, 0.1);
  spatial_ = register_module("spatial", make_conv(2, 1, kernel));
}

torch::Tensor CbamImpl::channel_gate(const torch::Tensor& x) {
  auto mlp = [this](const torch::Tensor& t) { return fc2_->forward(torch::relu(fc1_->forward(t))); };
  auto avg = torch::adaptive_avg_pool2d(x, {1, 1});
  auto mx = torch::amax(x, {2, 3}, /*keepdim=*/true);
  return torch::sigmoid(mlp(avg) + mlp(mx));
}

torch::Tensor CbamImpl::spatial_gate(const torch::Tensor& x) {
  auto pooled = torch::cat({x.mean(1, true), std::get<0>(x.max(1, true))}, 1);
  return torch::sigmoid(spatial_->forward(pooled));
}

torch::Tensor CbamImpl::forward(const torch::Tensor& x) {
  auto y = x * channel_gate(x);
  return y * spatial_gate(y);
}

}  // namespace starnet
