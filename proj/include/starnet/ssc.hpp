#pragma once
// Star-type skip connections.
//
// For a pyramid F_0..F_n (level i: C_i channels, side S_0 / 2^i) the aggregated
// map at level i is
//
//   connect_i(F) + upsampling_i(F) + downsampling_i(F)
//   downsampling_i(F) = sum_{j<i} conv1(conv3_down^(i-j)(F_j))
//   upsampling_i(F)   = sum_{j>i} conv1(deconv3_up^(j-i)(F_j))
//   connect_i(F)      = conv1(F_i)
//
// Multi-octave resampling cascades one stride-2 kernel-3 (transposed) conv per
// octave at the source width; the trailing 1x1 conv aligns channels.

#include <torch/torch.h>

#include <cstdint>
#include <vector>

namespace starnet {

using Pyramid = std::vector<torch::Tensor>;

// Throws ShapeError unless levels have the given channels and halve in side.
void check_pyramid(const Pyramid& levels, const std::vector<int64_t>& channels);

struct SscConfig {
  std::vector<int64_t> channels;       // C_0..C_n
  std::vector<int64_t> chain_kernels;  // DFM -> DFM kernel feeding level 1..n

  size_t levels() const { return channels.size(); }
  void validate() const;
};

class StarAggregatorImpl : public torch::nn::Module {
 public:
  explicit StarAggregatorImpl(std::vector<int64_t> channels);

  Pyramid forward(const Pyramid& features);

  torch::Tensor downsampling(const Pyramid& features, size_t level);
  torch::Tensor upsampling(const Pyramid& features, size_t level);
  torch::Tensor same_level(const Pyramid& features, size_t level);

  size_t down_summands(size_t level) const;
  size_t up_summands(size_t level) const;

  // conv1 of connect_i; exposed so tests can set known weights.
  torch::nn::Conv2d same_level_conv(size_t level) const { return same_.at(level); }
  size_t levels() const { return channels_.size(); }

 private:
  void require_level(size_t level) const;
  torch::nn::Sequential& down_path(size_t from, size_t to);
  torch::nn::Sequential& up_path(size_t from, size_t to);

  std::vector<int64_t> channels_;
  std::vector<torch::nn::Conv2d> same_;
  std::vector<std::vector<torch::nn::Sequential>> down_;  // [from][to], to > from
  std::vector<std::vector<torch::nn::Sequential>> up_;    // [from][to], to < from
};
TORCH_MODULE(StarAggregator);

// DFM -> DFM flow: conv_{K_i}(m_{i-1}) with stride 2, mapping C_{i-1} to C_i.
class DfmChainImpl : public torch::nn::Module {
 public:
  explicit DfmChainImpl(const SscConfig& cfg);

  // Chained input for `level` (>= 1) from the previous level's DFM output.
  torch::Tensor forward(const torch::Tensor& previous, size_t level);
  int64_t kernel_size(size_t level) const;

 private:
  SscConfig cfg_;
  std::vector<torch::nn::Conv2d> convs_;  // convs_[i-1] feeds level i
};
TORCH_MODULE(DfmChain);

}  // namespace starnet
