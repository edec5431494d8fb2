#pragma once
// Full desnowing network:
//
//   stem -> MIT encoder (levels 0..n) -> star skip aggregation into per-level
//   DFMs (with the DFM -> DFM chain) -> star aggregation into the decoder ->
//   MIT decoder -> head, plus an optional global residual.

#include <torch/torch.h>

#include <cstdint>

#include "starnet/config.hpp"
#include "starnet/dfm.hpp"
#include "starnet/ssc.hpp"

namespace starnet {

// Intermediate pyramids of one forward pass.
struct SkipTaps {
  Pyramid encoder;     // encoder block outputs
  Pyramid dfm_in;      // aggregated encoder features plus chained DFM output
  Pyramid dfm_out;     // DFM outputs (identity when DFM is ablated)
  Pyramid decoder_in;  // aggregated DFM outputs fed to the decoder
};

class StarNetImpl : public torch::nn::Module {
 public:
  explicit StarNetImpl(const StarNetConfig& cfg);

  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor forward_taps(const torch::Tensor& x, SkipTaps& taps);

  // Stages of forward(), exposed for connectivity tests.
  Pyramid encode(const torch::Tensor& x);
  SkipTaps skip_path(const Pyramid& encoder);
  torch::Tensor decode(const Pyramid& decoder_in, const torch::Tensor& x);

  // Throws ShapeError unless x is [B, 3, H, W] with H, W multiples of input_multiple().
  void check_input(const torch::Tensor& x) const;

  // forward() clamped to [0, 1], without autograd.
  torch::Tensor infer(const torch::Tensor& x);

  torch::nn::Conv2d head() const { return head_conv_; }
  const StarNetConfig& config() const { return cfg_; }

 private:
  torch::Tensor run_block(std::vector<torch::nn::AnyModule>& blocks, size_t level,
                          const torch::Tensor& x);

  StarNetConfig cfg_;
  torch::nn::Conv2d stem_conv_{nullptr};
  torch::nn::Conv2d stem_patch_{nullptr};
  std::vector<torch::nn::AnyModule> encoder_;
  std::vector<torch::nn::Conv2d> down_;
  StarAggregator to_dfm_{nullptr};
  DfmChain chain_{nullptr};
  std::vector<Dfm> dfm_;
  StarAggregator to_decoder_{nullptr};
  std::vector<torch::nn::ConvTranspose2d> up_;
  std::vector<torch::nn::AnyModule> decoder_;
  torch::nn::ConvTranspose2d head_up_{nullptr};
  torch::nn::Conv2d head_conv_{nullptr};
};
TORCH_MODULE(StarNet);

struct ModelState {
  StarNet net{nullptr};
  StarNetConfig config;
  uint64_t config_hash = 0;
  int64_t parameter_count = 0;
};

// Seeds torch's generator and instantiates the network; logs the parameter count.
ModelState build(const StarNetConfig& config, uint64_t seed = 0);

int64_t count_parameters(torch::nn::Module& module);

}  // namespace starnet
