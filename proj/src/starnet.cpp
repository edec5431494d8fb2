#include "starnet/starnet.hpp"

#include <string>

#include "starnet/errors.hpp"
#include "starnet/layers.hpp"
#include "starnet/log.hpp"
#include "starnet/mit.hpp"

namespace starnet {
namespace {

torch::nn::AnyModule make_block(const StarNetConfig& cfg, size_t level) {
  if (cfg.flags.use_mit) return torch::nn::AnyModule(MitBlock(cfg.mit[level]));
  return torch::nn::AnyModule(PlainTransformerBlock(cfg.channels[level], cfg.plain_heads[level]));
}

}  // namespace

StarNetImpl::StarNetImpl(const StarNetConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const auto& ch = cfg_.channels;
  const size_t levels = cfg_.levels();
  const int64_t s = cfg_.stem_stride;

  stem_conv_ = register_module("stem_conv", make_conv(3, ch[0], 3));
  stem_patch_ = register_module(
      "stem_patch", torch::nn::Conv2d(torch::nn::Conv2dOptions(ch[0], ch[0], s).stride(s)));
  torch::nn::init::zeros_(stem_patch_->bias);

  for (size_t i = 0; i < levels; ++i) {
    encoder_.push_back(make_block(cfg_, i));
    register_module("enc" + std::to_string(i), encoder_.back().ptr());
    if (i + 1 < levels) {
      down_.push_back(register_module("down" + std::to_string(i), make_conv(ch[i], ch[i + 1], 3, 2)));
    }
  }

  if (cfg_.flags.use_ssc) {
    to_dfm_ = register_module("to_dfm", StarAggregator(ch));
    if (levels > 1) chain_ = register_module("chain", DfmChain(cfg_.ssc));
  }
  if (cfg_.flags.use_dfm) {
    for (size_t i = 0; i < levels; ++i) {
      dfm_.push_back(register_module("dfm" + std::to_string(i), Dfm(cfg_.dfm[i])));
    }
  }
  if (cfg_.flags.use_ssc) to_decoder_ = register_module("to_decoder", StarAggregator(ch));

  for (size_t i = 0; i < levels; ++i) {
    decoder_.push_back(make_block(cfg_, i));
    register_module("dec" + std::to_string(i), decoder_.back().ptr());
    if (i + 1 < levels) {
      up_.push_back(register_module("up" + std::to_string(i), make_upsample(ch[i + 1], ch[i])));
    }
  }

  head_up_ = register_module(
      "head_up", torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(ch[0], ch[0], s).stride(s)));
  torch::nn::init::zeros_(head_up_->bias);
  head_conv_ = register_module("head_conv", make_conv(ch[0], 3, 3));
}

void StarNetImpl::check_input(const torch::Tensor& x) const {
  if (x.dim() != 4 || x.size(1) != 3) {
    throw ShapeError("starnet: expected a [B, 3, H, W] batch, got " + std::to_string(x.dim()) + "-d input");
  }
  const int64_t m = cfg_.input_multiple();
  if (x.size(2) % m != 0 || x.size(3) % m != 0) {
    throw ShapeError("starnet: input height and width must be divisible by " + std::to_string(m) +
                     ", got " + std::to_string(x.size(2)) + "x" + std::to_string(x.size(3)));
  }
}

torch::Tensor StarNetImpl::run_block(std::vector<torch::nn::AnyModule>& blocks, size_t level,
                                     const torch::Tensor& x) {
  return blocks[level].forward<torch::Tensor>(x);
}

Pyramid StarNetImpl::encode(const torch::Tensor& x) {
  check_input(x);
  Pyramid e;
  auto h = stem_patch_->forward(stem_conv_->forward(x));
  for (size_t i = 0; i < cfg_.levels(); ++i) {
    if (i > 0) h = down_[i - 1]->forward(h);
    h = run_block(encoder_, i, h);
    e.push_back(h);
  }
  return e;
}

SkipTaps StarNetImpl::skip_path(const Pyramid& encoder) {
  check_pyramid(encoder, cfg_.channels);
  SkipTaps t;
  t.encoder = encoder;
  const Pyramid aggregated = cfg_.flags.use_ssc ? to_dfm_->forward(encoder) : encoder;
  for (size_t i = 0; i < cfg_.levels(); ++i) {
    auto in = aggregated[i];
    if (cfg_.flags.use_ssc && i > 0) in = in + chain_->forward(t.dfm_out[i - 1], i);
    t.dfm_in.push_back(in);
    t.dfm_out.push_back(cfg_.flags.use_dfm ? dfm_[i]->forward(in) : in);
  }
  t.decoder_in = cfg_.flags.use_ssc ? to_decoder_->forward(t.dfm_out) : t.dfm_out;
  return t;
}

torch::Tensor StarNetImpl::decode(const Pyramid& decoder_in, const torch::Tensor& x) {
  check_pyramid(decoder_in, cfg_.channels);
  const size_t last = cfg_.levels() - 1;
  auto y = run_block(decoder_, last, decoder_in[last]);
  for (size_t i = last; i-- > 0;) {
    y = run_block(decoder_, i, up_[i]->forward(y) + decoder_in[i]);
  }
  auto out = head_conv_->forward(head_up_->forward(y));
  return cfg_.global_residual ? out + x : out;
}

torch::Tensor StarNetImpl::forward_taps(const torch::Tensor& x, SkipTaps& taps) {
  taps = skip_path(encode(x));
  return decode(taps.decoder_in, x);
}

torch::Tensor StarNetImpl::forward(const torch::Tensor& x) {
  SkipTaps taps;
  return forward_taps(x, taps);
}

torch::Tensor StarNetImpl::infer(const torch::Tensor& x) {
  torch::NoGradGuard no_grad;
  return forward(x).clamp(0.0, 1.0);
}

int64_t count_parameters(torch::nn::Module& module) {
  int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

ModelState build(const StarNetConfig& config, uint64_t seed) {
  config.validate();
  torch::manual_seed(seed);
  ModelState m;
  m.config = config;
  m.net = StarNet(config);
  m.config_hash = config.hash();
  m.parameter_count = count_parameters(*m.net);
  log::info("built ", to_string(config.preset), " model with ", m.parameter_count, " parameters");
  return m;
}

}  // namespace starnet
